"""Aggregator policy: simplex projection, shift planning, NES updates."""

import numpy as np
import pytest

from flexcluster.aggregator import (
    AggregatorPolicy,
    NesOptimizer,
    apportion,
    identity_filter,
    moving_average_filter,
    nes_step,
    plan_load_shift,
    project_simplex,
    target_load,
)


class TestSimplexProjection:
    def test_exterior_point(self):
        assert np.allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])

    def test_interior_point_is_fixed(self):
        v = np.array([0.5, 0.5])
        assert np.allclose(project_simplex(v), v)

    def test_uniform_from_equal_logits(self):
        assert np.allclose(project_simplex([7.0, 7.0, 7.0]), [1 / 3] * 3)

    def test_output_on_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = project_simplex(rng.normal(size=rng.integers(1, 9), scale=3.0))
            assert np.all(p >= 0)
            assert np.sum(p) == pytest.approx(1.0, abs=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=6)
        p = project_simplex(v)
        assert np.allclose(project_simplex(p), p, atol=1e-12)

    def test_projection_is_closest_point(self):
        # Compare against a dense sweep over the 2-simplex.
        rng = np.random.default_rng(2)
        grid = np.linspace(0.0, 1.0, 201)
        for _ in range(10):
            v = rng.normal(size=2, scale=2.0)
            p = project_simplex(v)
            best = min(
                ((a, 1 - a) for a in grid),
                key=lambda q: (q[0] - v[0]) ** 2 + (q[1] - v[1]) ** 2,
            )
            assert np.sum((p - v) ** 2) <= (best[0] - v[0]) ** 2 + (
                best[1] - v[1]
            ) ** 2 + 1e-9


class TestFilters:
    def test_identity_filter_reproduces_center(self):
        w = identity_filter(2)
        assert target_load(w, [5.0, 6.0, 7.0, 8.0, 9.0]) == 7.0

    def test_moving_average_hand_value(self):
        w = moving_average_filter(2)
        assert target_load(w, [0.0, 0.0, 12.0, 0.0, 0.0]) == pytest.approx(2.4)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="disagree"):
            target_load(identity_filter(2), [1.0, 2.0, 3.0])


class TestPolicy:
    def test_initial_policy_shares_proportional_to_demand(self):
        pol = AggregatorPolicy.initial(3, [1.0, 3.0])
        assert np.allclose(pol.shares(), [0.25, 0.75])
        assert np.allclose(pol.omega, np.full(7, 1 / 7))

    def test_flat_round_trip(self):
        pol = AggregatorPolicy(np.arange(5.0), np.array([0.2, 0.8]), horizon=2)
        clone = AggregatorPolicy.from_flat(pol.to_flat(), 2, 2)
        assert np.array_equal(clone.omega, pol.omega)
        assert np.array_equal(clone.phi_logits, pol.phi_logits)

    def test_json_round_trip(self):
        pol = AggregatorPolicy.initial(2, [2.0, 1.0, 1.0])
        clone = AggregatorPolicy.from_json(pol.to_json())
        assert np.array_equal(clone.omega, pol.omega)
        assert clone.horizon == 2

    def test_wrong_tap_count_rejected(self):
        with pytest.raises(ValueError, match="taps"):
            AggregatorPolicy(np.ones(4), np.ones(2), horizon=2)


class TestPlanning:
    def test_identity_filter_requests_nothing(self):
        pol = AggregatorPolicy(identity_filter(3), np.ones(2), horizon=3)
        shifts = plan_load_shift(pol, [4.0, 5.0, 6.0], [7.0, 8.0, 9.0, 10.0])
        assert np.array_equal(shifts, np.zeros(3))

    def test_moving_average_on_flat_series_requests_nothing(self):
        pol = AggregatorPolicy(moving_average_filter(2), np.ones(3), horizon=2)
        shifts = plan_load_shift(pol, [5.0, 5.0], [5.0, 5.0, 5.0])
        assert np.allclose(shifts, 0.0, atol=1e-12)

    def test_smoothing_pulls_peak_down(self):
        pol = AggregatorPolicy(moving_average_filter(2), np.ones(3), horizon=2)
        # Current hour is a spike: the first shift must be negative, and the
        # neighbours get the balancing charge.
        shifts = plan_load_shift(pol, [1.0, 1.0], [11.0, 1.0, 1.0])
        assert shifts[0] == pytest.approx((15.0 / 5.0) - 11.0)
        assert shifts[1] == pytest.approx(3.0 - 1.0)

    def test_short_history_padded_left(self):
        pol = AggregatorPolicy(moving_average_filter(2), np.ones(3), horizon=2)
        a = plan_load_shift(pol, [4.0], [4.0, 4.0, 4.0])
        b = plan_load_shift(pol, [4.0, 4.0], [4.0, 4.0, 4.0])
        assert np.array_equal(a, b)

    def test_empty_history_uses_first_forecast(self):
        pol = AggregatorPolicy(moving_average_filter(2), np.ones(3), horizon=2)
        shifts = plan_load_shift(pol, [], [6.0, 6.0, 6.0])
        assert np.allclose(shifts, 0.0, atol=1e-12)

    def test_wrong_forecast_length_rejected(self):
        pol = AggregatorPolicy(moving_average_filter(2), np.ones(3), horizon=2)
        with pytest.raises(ValueError, match="forecast"):
            plan_load_shift(pol, [1.0, 1.0], [1.0, 1.0])


class TestApportionment:
    def test_shares_conserve_cluster_shift(self):
        rng = np.random.default_rng(3)
        shares = project_simplex(rng.normal(size=5))
        shift = rng.normal(size=4) * 3.0
        cmd = apportion(shift, shares)
        assert cmd.shape == (5, 4)
        assert np.allclose(cmd.sum(axis=0), shift, atol=1e-12)

    def test_single_building_gets_everything(self):
        cmd = apportion(np.array([2.0, -1.0]), np.array([1.0]))
        assert np.array_equal(cmd, [[2.0, -1.0]])


class TestNesStep:
    def test_hand_update(self):
        e = np.array([0.3, -0.2, 0.5])
        theta = np.zeros(3)
        new, sigma_r = nes_step(
            theta, np.stack([e, -e]), [1.0, -1.0], alpha=0.05, sigma=0.1
        )
        assert sigma_r == pytest.approx(1.0)
        assert np.allclose(new, 0.05 * e)

    def test_flat_returns_skip_update(self):
        theta = np.array([1.0, 2.0])
        eps = np.random.default_rng(0).standard_normal((4, 2))
        new, sigma_r = nes_step(theta, eps, [3.0, 3.0, 3.0, 3.0], 0.01, 0.01)
        assert sigma_r == 0.0
        assert np.array_equal(new, theta)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="batch"):
            nes_step(np.zeros(3), np.zeros((2, 2)), [1.0, 2.0], 0.01, 0.01)


class TestNesOptimizer:
    def bowl(self, target):
        return lambda th: -float(np.sum((th - target) ** 2))

    def test_update_cadence(self):
        opt = NesOptimizer(np.zeros(2), pop_size=4)
        rng = np.random.default_rng(0)
        f = self.bowl(np.array([1.0, -1.0]))
        completed = []
        for _ in range(8):
            cand = opt.propose(rng)
            completed.append(opt.record(f(cand)))
        assert completed == [False, False, False, True] * 2
        assert opt.updates_applied == 2

    def test_progress_on_quadratic_bowl(self):
        target = np.full(5, 0.6)
        opt = NesOptimizer(np.zeros(5), alpha=0.01, sigma=0.01, pop_size=4)
        rng = np.random.default_rng(7)
        f = self.bowl(target)
        d0 = np.linalg.norm(opt.theta - target)
        for _ in range(400 * opt.pop_size):
            opt.record(f(opt.propose(rng)))
        assert np.linalg.norm(opt.theta - target) < 0.5 * d0

    def test_propose_twice_without_score_rejected(self):
        opt = NesOptimizer(np.zeros(2))
        rng = np.random.default_rng(0)
        opt.propose(rng)
        with pytest.raises(RuntimeError, match="not been scored"):
            opt.propose(rng)

    def test_record_without_candidate_rejected(self):
        opt = NesOptimizer(np.zeros(2))
        with pytest.raises(RuntimeError, match="pending"):
            opt.record(1.0)

    def test_state_round_trip_mid_batch(self):
        opt = NesOptimizer(np.array([0.5, -0.5]), pop_size=3)
        rng = np.random.default_rng(42)
        opt.propose(rng)
        opt.record(-2.0)
        opt.propose(rng)
        clone = NesOptimizer.from_state_dict(opt.state_dict())
        assert np.array_equal(clone.theta, opt.theta)
        assert clone.pending == opt.pending
        assert len(clone._eps) == len(opt._eps)
        assert np.array_equal(clone._eps[0], opt._eps[0])

    def test_trace_records_each_batch(self):
        opt = NesOptimizer(np.zeros(3), pop_size=2)
        rng = np.random.default_rng(5)
        returns = [-1.0, -1.4, -0.7, -0.7]
        for r in returns:
            opt.propose(rng)
            opt.record(r)
        assert [row["batch"] for row in opt.trace] == [1, 2]
        first, second = opt.trace
        assert first["applied"] and first["returns"] == [-1.0, -1.4]
        assert first["sigma_r"] == pytest.approx(0.2)
        assert first["step_norm"] > 0.0
        assert not second["applied"] and second["step_norm"] == 0.0
        clone = NesOptimizer.from_state_dict(opt.state_dict())
        assert clone.trace == opt.trace
