"""Forecasting: ridge fits, net composition, scoring, persistence yardstick."""

import numpy as np
import pytest

from flexcluster.dataio import (
    Building,
    BuildingAttributes,
    BuildingSeries,
    ClusterDataset,
    generate_synthetic_cluster,
    split_odd_even_months,
)
from flexcluster.forecaster import (
    LinearForecaster,
    actual_total_matrix,
    fit_linear_forecaster,
    per_horizon_report,
    persistence_total_matrix,
    predict_net,
    runtime_forecasts,
    score,
)
from flexcluster.simenv import EnvConfig, baseline_total_series


def flat_cluster(n_days=40, nonshift=3.0, solar_kw=0.0):
    """A cluster whose zero-action total load is exactly constant."""
    n = n_days * 24
    day = np.repeat(np.arange(1, n_days + 1), 24)
    hour = np.tile(np.arange(24), n_days)
    series = BuildingSeries(
        day_of_year=day,
        hour_of_day=hour,
        day_type=((day - 1) % 7) + 1,
        outdoor_temp_c=np.full(n, 10.0),  # below cooling balance: no cooling
        outdoor_rh_pct=np.full(n, 50.0),
        diffuse_solar_wm2=np.zeros(n),
        direct_solar_wm2=np.zeros(n),
        nonshiftable_kwh=np.full(n, float(nonshift)),
        cooling_demand_kwh=np.zeros(n),
        dhw_demand_kwh=np.zeros(n),
        solar_gen_per_unit=np.zeros(n),
    )
    attrs = BuildingAttributes(
        building_id=0,
        building_type="residential",
        solar_capacity_kw=solar_kw,
        has_dhw_tank=False,
        cooling_tank_capacity_kwh=5.0,
        dhw_tank_capacity_kwh=0.0,
        heat_pump_rated_kw=3.0,
        heater_rated_kw=0.0,
        annual_cooling_kwh=0.0,
        annual_dhw_kwh=0.0,
        annual_electric_kwh=nonshift * 24 * 365,
    )
    return ClusterDataset(
        climate_zone_id=0, zone_profile="flat", buildings=[Building(attrs, series)]
    )


class TestFitting:
    def test_constant_load_fit_is_exact(self):
        ds = flat_cluster()
        model = fit_linear_forecaster(ds)
        bundles = runtime_forecasts(model, ds)
        assert np.allclose(bundles[0].p_total, 3.0, atol=1e-9)

    def test_huge_ridge_collapses_to_train_mean(self):
        ds = generate_synthetic_cluster(4, 2, 40, "hot_humid")
        cfg = EnvConfig()
        model = fit_linear_forecaster(ds, ridge_lambda=1e12, env_cfg=cfg)
        target_mean = np.vstack(
            [baseline_total_series(ds, cfg)[i] for i in range(2)]
        )
        bundles = runtime_forecasts(model, ds, cfg)
        for i in range(2):
            preds = bundles[i].p_total
            # All coefficient mass is crushed: every prediction equals the
            # pooled train-mean of the corresponding horizon target.
            assert np.std(preds[:, 0]) < 1e-6
            assert abs(preds[0, 0] - target_mean.mean()) < 0.2

    def test_night_only_solar_predicts_zero(self):
        ds = flat_cluster()  # irradiance is identically zero
        model = fit_linear_forecaster(ds)
        bundles = runtime_forecasts(model, ds)
        assert np.allclose(bundles[0].p_gen, 0.0, atol=1e-12)

    def test_fit_is_deterministic(self):
        ds = generate_synthetic_cluster(9, 2, 35, "hot_dry")
        m1 = fit_linear_forecaster(ds)
        m2 = fit_linear_forecaster(ds)
        for k in m1.heads:
            assert np.array_equal(m1.heads[k].coef, m2.heads[k].coef)
            assert np.array_equal(m1.heads[k].intercept, m2.heads[k].intercept)

    def test_singular_normal_equations_reported_at_zero_lambda(self):
        ds = flat_cluster()  # constant features are zero after standardizing
        with pytest.raises(np.linalg.LinAlgError, match="singular"):
            fit_linear_forecaster(ds, ridge_lambda=0.0)

    def test_short_training_split_rejected(self):
        ds = generate_synthetic_cluster(3, 1, 20, "hot_humid")
        with pytest.raises(ValueError, match="30 days"):
            fit_linear_forecaster(ds)


class TestNetComposition:
    def test_hand_example(self):
        net = predict_net(np.array([5.0]), np.array([0.3]), 10.0)
        assert net[0] == pytest.approx(2.0)

    def test_zero_capacity_passthrough(self):
        p = np.array([4.0, 5.0])
        assert np.array_equal(predict_net(p, np.array([0.5, 0.9]), 0.0), p)

    def test_linear_in_capacity(self):
        p = np.array([4.0])
        g = np.array([0.2])
        d1 = p - predict_net(p, g, 5.0)
        d2 = p - predict_net(p, g, 10.0)
        assert d2[0] == pytest.approx(2 * d1[0])

    def test_identity_holds_for_emitted_bundles(self):
        ds = generate_synthetic_cluster(6, 3, 35, "warm_coastal")
        model = fit_linear_forecaster(ds)
        bundles = runtime_forecasts(model, ds)
        for i, b in enumerate(ds.buildings):
            lhs = bundles[i].p_net + b.attributes.solar_capacity_kw * bundles[i].p_gen
            assert np.allclose(lhs, bundles[i].p_total, atol=1e-10)

    def test_horizon_mismatch_rejected(self):
        with pytest.raises(ValueError):
            predict_net(np.ones(3), np.ones(4), 1.0)


class TestScoring:
    def test_perfect_prediction(self):
        r = score(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert r.rmse == 0.0 and r.mape_pct == 0.0

    def test_constant_offset(self):
        true = np.array([3.0, 5.0, 7.0])
        assert score(true + 1.0, true).rmse == pytest.approx(1.0)

    def test_hand_example(self):
        r = score(np.array([1.0, 6.0]), np.array([2.0, 4.0]))
        assert r.rmse == pytest.approx(np.sqrt(5.0 / 2.0))
        assert r.mape_pct == pytest.approx(50.0)

    def test_near_zero_targets_skipped_and_counted(self):
        r = score(np.array([1.0, 1.0]), np.array([0.0, 2.0]))
        assert r.n_skipped == 1
        assert r.mape_pct == pytest.approx(50.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            score(np.array([]), np.array([]))


class TestPersistence:
    def test_periodic_series_scores_zero_error(self):
        ds = flat_cluster(n_days=10)
        cfg = EnvConfig()
        pers = persistence_total_matrix(ds, cfg)
        true = actual_total_matrix(ds, cfg)
        # Skip the clamped first day.
        assert np.allclose(pers[:, 24:, :], true[:, 24:, :], atol=1e-12)

    def test_fitted_model_beats_persistence_on_synthetic_test(self):
        ds = generate_synthetic_cluster(13, 4, 120, "warm_coastal")
        train, test = split_odd_even_months(ds)
        model = fit_linear_forecaster(train)
        rows = per_horizon_report(model, test)
        summary = rows[-1]
        assert summary["horizon"] == "all"
        assert summary["model_mape_pct"] < summary["persistence_mape_pct"]


class TestSerialization:
    def test_json_round_trip_preserves_predictions(self):
        ds = generate_synthetic_cluster(2, 2, 35, "mixed_inland")
        model = fit_linear_forecaster(ds)
        clone = LinearForecaster.from_json(model.to_json())
        b1 = runtime_forecasts(model, ds)
        b2 = runtime_forecasts(clone, ds)
        for i in b1:
            assert np.array_equal(b1[i].p_net, b2[i].p_net)
            assert np.array_equal(b1[i].q0_cooling, b2[i].q0_cooling)
