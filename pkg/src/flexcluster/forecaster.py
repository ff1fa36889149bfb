"""Multi-horizon demand and PV forecasting on exogenous cluster data.

One pooled ridge model (direct multi-horizon: an independent linear readout
per horizon step) predicts each building's zero-action total electric load
plus the thermal cooling and DHW demands; a second model predicts per-unit
PV generation from the shared weather stream.  Net demand follows by
subtracting installed capacity times predicted generation from predicted
total load.

Everything here is a pure function of the dataset: the targets are the
zero-action (no storage activity) series, so forecasts never depend on what
any controller later does.  That keeps the closed loop free of feedback
through the predictor and makes precomputing all forecasts for an epoch
legitimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataio import Building, ClusterDataset
from .simenv import EnvConfig, baseline_total_series

__all__ = [
    "HORIZON",
    "RidgeHead",
    "LinearForecaster",
    "ForecastBundle",
    "ScoreResult",
    "fit_linear_forecaster",
    "predict_net",
    "runtime_forecasts",
    "persistence_total_matrix",
    "actual_total_matrix",
    "score",
    "per_horizon_report",
]

HORIZON = 12  # planning horizon T; forecasts cover t .. t+T (13 steps)

_HOLIDAY_TYPE = 8


@dataclass
class RidgeHead:
    """Per-target linear readout on the shared standardized features."""

    coef: np.ndarray  # (n_features, n_outputs)
    intercept: np.ndarray  # (n_outputs,)

    def predict(self, x_std: np.ndarray) -> np.ndarray:
        return x_std @ self.coef + self.intercept


def _ridge_fit(x_std: np.ndarray, y: np.ndarray, lam: float) -> RidgeHead:
    """Multi-output ridge with unpenalized intercept on standardized inputs."""
    y = np.atleast_2d(y.T).T
    y_mean = y.mean(axis=0)
    gram = x_std.T @ x_std + lam * np.eye(x_std.shape[1])
    if lam == 0.0:
        # May be singular; report rather than mask.
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError(
                "normal equations are singular at ridge_lambda=0"
            )
    coef = scipy.linalg.solve(gram, x_std.T @ (y - y_mean), assume_a="pos")
    return RidgeHead(coef=coef, intercept=y_mean)


def _clampi(idx: np.ndarray, n: int) -> np.ndarray:
    return np.clip(idx, 0, n - 1)


def _time_features(series, pos: np.ndarray) -> np.ndarray:
    hour = series.hour_of_day[pos]
    day = series.day_of_year[pos]
    dtype = series.day_type[pos]
    return np.column_stack(
        [
            np.sin(2 * np.pi * hour / 24.0),
            np.cos(2 * np.pi * hour / 24.0),
            np.sin(2 * np.pi * day / 365.0),
            np.cos(2 * np.pi * day / 365.0),
            ((dtype >= 6) & (dtype <= 7)).astype(float),
            (dtype == _HOLIDAY_TYPE).astype(float),
        ]
    )


def _weather_features(series, pos: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [
            series.outdoor_temp_c[pos],
            series.outdoor_rh_pct[pos],
            series.diffuse_solar_wm2[pos],
            series.direct_solar_wm2[pos],
        ]
    )


def _load_features(
    b: Building, total: np.ndarray, pos: np.ndarray, lags: int
) -> np.ndarray:
    """Feature rows for the demand heads at the given positions."""
    s = b.series
    n = s.n_hours
    lag_idx = _clampi(pos[:, None] - 1 - np.arange(lags)[None, :], n)
    prev = _clampi(pos - 1, n)
    a = b.attributes
    static = np.tile(
        [
            a.solar_capacity_kw,
            a.annual_electric_kwh / 1e3,
            a.annual_cooling_kwh / 1e3,
            a.annual_dhw_kwh / 1e3,
            1.0 if a.has_dhw_tank else 0.0,
        ],
        (pos.size, 1),
    )
    return np.hstack(
        [
            total[lag_idx],
            total[prev][:, None],
            s.nonshiftable_kwh[prev][:, None],
            s.solar_gen_per_unit[prev][:, None],
            _weather_features(s, pos),
            _time_features(s, pos),
            static,
        ]
    )


def _solar_features(series, pos: np.ndarray, lags: int) -> np.ndarray:
    n = series.n_hours
    lag_idx = _clampi(pos[:, None] - 1 - np.arange(lags)[None, :], n)
    return np.hstack(
        [
            series.solar_gen_per_unit[lag_idx],
            _weather_features(series, pos),
            _time_features(series, pos),
        ]
    )


def _fit_positions(series, lags: int, horizon: int) -> np.ndarray:
    """Positions whose lag window and target horizon sit in one contiguous run."""
    ti = series.time_index()
    run = np.concatenate([[0], np.cumsum(np.diff(ti) != 1)])
    pos = np.arange(lags, series.n_hours - horizon)
    ok = run[pos - lags] == run[pos + horizon]
    return pos[ok]


def _horizon_targets(values: np.ndarray, pos: np.ndarray, horizon: int) -> np.ndarray:
    return values[pos[:, None] + np.arange(horizon + 1)[None, :]]


@dataclass
class LinearForecaster:
    lags: int
    horizon: int
    ridge_lambda: float
    demand_means: np.ndarray
    demand_stds: np.ndarray
    solar_means: np.ndarray
    solar_stds: np.ndarray
    heads: dict[str, RidgeHead]  # total_load, cooling_demand, dhw_demand, solar_gen
    env_params: dict

    def demand_std(self, x: np.ndarray) -> np.ndarray:
        return (x - self.demand_means) / self.demand_stds

    def solar_std(self, x: np.ndarray) -> np.ndarray:
        return (x - self.solar_means) / self.solar_stds

    def to_json(self) -> str:
        def arr(a):
            return np.asarray(a).tolist()

        return json.dumps(
            {
                "lags": self.lags,
                "horizon": self.horizon,
                "ridge_lambda": self.ridge_lambda,
                "demand_means": arr(self.demand_means),
                "demand_stds": arr(self.demand_stds),
                "solar_means": arr(self.solar_means),
                "solar_stds": arr(self.solar_stds),
                "heads": {
                    k: {"coef": arr(h.coef), "intercept": arr(h.intercept)}
                    for k, h in self.heads.items()
                },
                "env_params": self.env_params,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "LinearForecaster":
        d = json.loads(text)
        return LinearForecaster(
            lags=d["lags"],
            horizon=d["horizon"],
            ridge_lambda=d["ridge_lambda"],
            demand_means=np.array(d["demand_means"]),
            demand_stds=np.array(d["demand_stds"]),
            solar_means=np.array(d["solar_means"]),
            solar_stds=np.array(d["solar_stds"]),
            heads={
                k: RidgeHead(np.array(v["coef"]), np.array(v["intercept"]))
                for k, v in d["heads"].items()
            },
            env_params=d["env_params"],
        )


def fit_linear_forecaster(
    train: ClusterDataset,
    lags: int = 24,
    ridge_lambda: float = 1.0,
    env_cfg: EnvConfig | None = None,
    horizon: int = HORIZON,
) -> LinearForecaster:
    """Fit the pooled demand heads and the solar head on the training split.

    Rows whose lag window or target horizon would straddle a gap between
    30-day blocks are dropped from fitting.
    """
    if lags < 1:
        raise ValueError("lags must be >= 1")
    span_days = np.unique(train.buildings[0].series.day_of_year).size
    if span_days < 30:
        raise ValueError("training split must span at least 30 days")
    env_cfg = env_cfg or EnvConfig()
    totals = baseline_total_series(train, env_cfg)

    x_rows, y_total, y_cool, y_dhw = [], [], [], []
    for i, b in enumerate(train.buildings):
        pos = _fit_positions(b.series, lags, horizon)
        x_rows.append(_load_features(b, totals[i], pos, lags))
        y_total.append(_horizon_targets(totals[i], pos, horizon))
        y_cool.append(_horizon_targets(b.series.cooling_demand_kwh, pos, horizon))
        y_dhw.append(_horizon_targets(b.series.dhw_demand_kwh, pos, horizon))
    x = np.vstack(x_rows)
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds[stds < 1e-12] = 1.0
    x_std = (x - means) / stds

    heads = {
        "total_load": _ridge_fit(x_std, np.vstack(y_total), ridge_lambda),
        "cooling_demand": _ridge_fit(x_std, np.vstack(y_cool), ridge_lambda),
        "dhw_demand": _ridge_fit(x_std, np.vstack(y_dhw), ridge_lambda),
    }

    s0 = train.buildings[0].series
    pos_s = _fit_positions(s0, lags, horizon)
    xs = _solar_features(s0, pos_s, lags)
    s_means = xs.mean(axis=0)
    s_stds = xs.std(axis=0)
    s_stds[s_stds < 1e-12] = 1.0
    heads["solar_gen"] = _ridge_fit(
        (xs - s_means) / s_stds,
        _horizon_targets(s0.solar_gen_per_unit, pos_s, horizon),
        ridge_lambda,
    )

    cp = env_cfg.cop
    return LinearForecaster(
        lags=lags,
        horizon=horizon,
        ridge_lambda=ridge_lambda,
        demand_means=means,
        demand_stds=stds,
        solar_means=s_means,
        solar_stds=s_stds,
        heads=heads,
        env_params={
            "eta_dhw": env_cfg.eta_dhw,
            "cop": [cp.c0, cp.c1, cp.t_ref_c, cp.cop_min, cp.cop_max],
        },
    )


@dataclass
class ForecastBundle:
    """Horizon forecasts for one building at one step (t .. t+T)."""

    p_total: np.ndarray
    p_gen: np.ndarray
    q0_cooling: np.ndarray
    q0_dhw: np.ndarray
    p_net: np.ndarray


def predict_net(
    p_total: np.ndarray, p_gen: np.ndarray, solar_capacity_kw: float
) -> np.ndarray:
    """Net demand: total load minus installed capacity times generation."""
    p_total = np.asarray(p_total, dtype=float)
    p_gen = np.asarray(p_gen, dtype=float)
    if p_total.shape != p_gen.shape:
        raise ValueError("horizon mismatch between load and generation forecasts")
    return p_total - solar_capacity_kw * p_gen


def runtime_forecasts(
    model: LinearForecaster, ds: ClusterDataset, env_cfg: EnvConfig | None = None
) -> dict[int, ForecastBundle]:
    """Forecast matrices for every position of an epoch, per building.

    Returns {building_index: bundle of (n_hours, T+1) arrays}.  Positions at
    the epoch edges clamp their lag/target windows to the available range;
    the epoch is treated as one continuous timeline.
    """
    env_cfg = env_cfg or EnvConfig()
    totals = baseline_total_series(ds, env_cfg)
    n = ds.n_hours
    pos = np.arange(n)
    s0 = ds.buildings[0].series
    gen_pred = np.clip(
        model.heads["solar_gen"].predict(
            model.solar_std(_solar_features(s0, pos, model.lags))
        ),
        0.0,
        None,
    )
    out: dict[int, ForecastBundle] = {}
    for i, b in enumerate(ds.buildings):
        x = model.demand_std(_load_features(b, totals[i], pos, model.lags))
        p_total = np.clip(model.heads["total_load"].predict(x), 0.0, None)
        q0_cool = np.clip(model.heads["cooling_demand"].predict(x), 0.0, None)
        q0_dhw = np.clip(model.heads["dhw_demand"].predict(x), 0.0, None)
        if not b.attributes.has_dhw_tank:
            q0_dhw = np.zeros_like(q0_dhw)
        p_net = predict_net(p_total, gen_pred, b.attributes.solar_capacity_kw)
        out[i] = ForecastBundle(
            p_total=p_total,
            p_gen=gen_pred,
            q0_cooling=q0_cool,
            q0_dhw=q0_dhw,
            p_net=p_net,
        )
    return out


def actual_total_matrix(
    ds: ClusterDataset, env_cfg: EnvConfig, horizon: int = HORIZON
) -> np.ndarray:
    """True zero-action total load aligned like the forecast matrices.

    Shape (n_buildings, n_hours, horizon+1); clamped at the epoch end.
    """
    totals = baseline_total_series(ds, env_cfg)
    n = totals.shape[1]
    idx = _clampi(np.arange(n)[:, None] + np.arange(horizon + 1)[None, :], n)
    return totals[:, idx]


def persistence_total_matrix(
    ds: ClusterDataset, env_cfg: EnvConfig, horizon: int = HORIZON
) -> np.ndarray:
    """Same-hour-yesterday forecast of the zero-action total load.

    The prediction for target time tau is the value observed at tau - 24 h,
    which is always in the past at planning time for horizons up to 23 h.
    """
    totals = baseline_total_series(ds, env_cfg)
    n = totals.shape[1]
    if n < 25:
        raise ValueError("persistence needs at least 24 hours of history")
    idx = _clampi(np.arange(n)[:, None] + np.arange(horizon + 1)[None, :] - 24, n)
    return totals[:, idx]


@dataclass
class ScoreResult:
    rmse: float
    mape_pct: float
    n_skipped: int


def score(pred: np.ndarray, true: np.ndarray) -> ScoreResult:
    """RMSE and MAPE; MAPE skips (and counts) targets below 1e-6 in magnitude."""
    pred = np.asarray(pred, dtype=float).ravel()
    true = np.asarray(true, dtype=float).ravel()
    if pred.size == 0 or pred.shape != true.shape:
        raise ValueError("score needs equal-length, nonempty series")
    rmse = float(np.sqrt(np.mean((pred - true) ** 2)))
    keep = np.abs(true) >= 1e-6
    if keep.any():
        mape = float(np.mean(np.abs(pred[keep] - true[keep]) / np.abs(true[keep]))) * 100
    else:
        mape = float("nan")
    return ScoreResult(rmse=rmse, mape_pct=mape, n_skipped=int((~keep).sum()))


def per_horizon_report(
    model: LinearForecaster, test: ClusterDataset, env_cfg: EnvConfig | None = None
) -> list[dict]:
    """Per-horizon RMSE/MAPE of the model and the persistence yardstick.

    Scores the total-load forecasts of every building over the full test
    epoch; one row per horizon step plus an "all" summary row.
    """
    env_cfg = env_cfg or EnvConfig()
    bundles = runtime_forecasts(model, test, env_cfg)
    model_mat = np.stack([bundles[i].p_total for i in range(test.n_buildings)])
    true_mat = actual_total_matrix(test, env_cfg, model.horizon)
    pers_mat = persistence_total_matrix(test, env_cfg, model.horizon)
    rows = []
    for label, sl in [(str(h), h) for h in range(model.horizon + 1)] + [("all", None)]:
        pick = slice(None) if sl is None else slice(sl, sl + 1)
        m = score(model_mat[:, :, pick], true_mat[:, :, pick])
        p = score(pers_mat[:, :, pick], true_mat[:, :, pick])
        rows.append(
            {
                "horizon": label,
                "model_rmse": m.rmse,
                "model_mape_pct": m.mape_pct,
                "persistence_rmse": p.rmse,
                "persistence_mape_pct": p.mape_pct,
            }
        )
    return rows
