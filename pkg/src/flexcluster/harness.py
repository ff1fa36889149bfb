"""Experiment orchestration: config files, training epochs, baselines, artifacts.

Ties the pieces together. One experiment is: generate a synthetic cluster,
split it into train/test months, fit the forecaster on the train months,
then walk the test epoch hour by hour with the aggregator planning shifts,
the building controllers tracking them, and the evolution-strategies
optimizer folding daily returns back into the policy. Everything is scored
against the rule-based schedule over the same epoch.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .aggregator import (
    AggregatorPolicy,
    NesOptimizer,
    apportion,
    identity_filter,
    plan_load_shift,
)
from .controller import (
    BuildingController,
    device_models_from_attributes,
    randomize_device_models,
)
from .qpsolver import AdmmSettings
from .dataio import (
    Building,
    BuildingSeries,
    ClusterDataset,
    DatasetFormatError,
    ZONE_PROFILES,
    generate_synthetic_cluster,
    read_csv,
    split_odd_even_months,
    write_csv,
)
from .evaluation import (
    CostReport,
    RawMetrics,
    compute_metrics,
    daily_return,
    normalized_cost,
)
from .forecaster import (
    HORIZON,
    LinearForecaster,
    fit_linear_forecaster,
    per_horizon_report,
    runtime_forecasts,
)
from .simenv import (
    ClusterEnv,
    CopParams,
    EnvConfig,
    baseline_net_series,
    cop_series,
    rbc_policy,
)

HOURS_PER_DAY = 24

# Tracking commands are kilowatt-hour scale, so 1e-4 is already far below
# anything the plant can resolve; the relative term keeps the stop
# meaningful when an unreachable command inflates the dual variables.
CONTROLLER_ADMM = AdmmSettings(eps_abs=1e-4, eps_rel=1e-3, max_iter=4000)


class ConfigError(ValueError):
    """Bad experiment configuration (file, key, or value)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class DatasetConfig:
    """Where the cluster comes from: generated, or loaded from ``path``.

    When ``path`` is set it names a directory previously written by the
    dataset writer and the generation fields are ignored.
    """

    zone: str = "hot_humid"
    n_buildings: int = 9
    n_days: int = 360
    seed: int = 123
    path: str | None = None


@dataclass
class ForecasterConfig:
    lags: int = 24
    ridge_lambda: float = 1.0


@dataclass
class AggregatorConfig:
    horizon: int = 12
    alpha: float = 0.01
    sigma: float = 0.01
    pop_size: int = 4
    filter_init: str = "moving_average"


@dataclass
class ControllerConfig:
    adagrad_lr: float = 0.01
    init_spread: float = 0.2


def _env_config_from_table(body: dict) -> EnvConfig:
    """[env] table (with optional [env.cop] subtable) to a validated EnvConfig."""
    body = dict(body)
    cop_body = body.pop("cop", {})
    if not isinstance(cop_body, dict):
        raise ConfigError("[env.cop] must be a table")
    for name, cls, table in (("env.cop", CopParams, cop_body), ("env", EnvConfig, body)):
        allowed = {f.name for f in dataclasses.fields(cls)} - {"cop"}
        bad = set(table) - allowed
        if bad:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
    try:
        return EnvConfig(cop=CopParams(**cop_body), **body)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [env] section: {exc}") from exc


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    def validate(self) -> None:
        d, f, a, c = self.dataset, self.forecaster, self.aggregator, self.controller
        if d.path is None and d.zone not in ZONE_PROFILES:
            raise ConfigError(
                f"unknown zone {d.zone!r}; choose from {sorted(ZONE_PROFILES)}"
            )
        if d.n_buildings < 1:
            raise ConfigError("dataset.n_buildings must be >= 1")
        if d.n_days < 60:
            raise ConfigError("dataset.n_days must be >= 60 for a usable split")
        if f.lags < 1:
            raise ConfigError("forecaster.lags must be >= 1")
        if f.ridge_lambda < 0:
            raise ConfigError("forecaster.ridge_lambda must be >= 0")
        if not 1 <= a.horizon <= HORIZON:
            raise ConfigError(f"aggregator.horizon must be in [1, {HORIZON}]")
        if a.alpha <= 0:
            raise ConfigError("aggregator.alpha must be positive")
        if a.sigma < 0:
            raise ConfigError("aggregator.sigma must be >= 0")
        if a.pop_size < 2:
            raise ConfigError("aggregator.pop_size must be >= 2")
        if a.filter_init not in ("moving_average", "identity"):
            raise ConfigError(
                "aggregator.filter_init must be 'moving_average' or 'identity'"
            )
        if c.adagrad_lr <= 0:
            raise ConfigError("controller.adagrad_lr must be positive")
        if not 0 <= c.init_spread < 1:
            raise ConfigError("controller.init_spread must be in [0, 1)")
        e = self.env
        if e.rbc_charge_rate < 0 or e.rbc_discharge_rate < 0:
            raise ConfigError("env RBC rates must be >= 0")
        for h in (e.rbc_charge_start, e.rbc_charge_end, e.rbc_discharge_start, e.rbc_discharge_end):
            if not 0 <= h <= 23:
                raise ConfigError("env RBC schedule hours must be in 0..23")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        sections = {
            "dataset": DatasetConfig,
            "forecaster": ForecasterConfig,
            "aggregator": AggregatorConfig,
            "controller": ControllerConfig,
        }
        unknown = set(data) - set(sections) - {"env"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in sections.items():
            body = data.get(name, {})
            if not isinstance(body, dict):
                raise ConfigError(f"[{name}] must be a table")
            allowed = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(body) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
            try:
                kwargs[name] = section_cls(**body)
            except TypeError as exc:
                raise ConfigError(f"bad [{name}] section: {exc}") from exc
        env_body = data.get("env", {})
        if not isinstance(env_body, dict):
            raise ConfigError("[env] must be a table")
        kwargs["env"] = _env_config_from_table(env_body)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {p}: {exc}") from exc
        return cls.from_dict(data)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Config from a TOML file, or all defaults when no path is given."""
    if path is None:
        cfg = ExperimentConfig()
        cfg.validate()
        return cfg
    return ExperimentConfig.from_toml(path)


# ---------------------------------------------------------------------------
# Preparation (everything that does not depend on the run seed)
# ---------------------------------------------------------------------------


def _with_terminal_row(ds: ClusterDataset) -> ClusterDataset:
    """Copy of the cluster with the last hour replicated once.

    The simulator consumes one row per step and needs a successor row for
    the final observation, so an epoch of H hours requires H+1 rows. The
    appended row only ever supplies that terminal observation.
    """
    buildings = []
    for b in ds.buildings:
        s = b.series
        cols = {}
        for name in s.__dataclass_fields__:
            arr = getattr(s, name)
            cols[name] = np.concatenate([arr, arr[-1:]])
        last_day = int(s.day_of_year[-1])
        last_hour = int(s.hour_of_day[-1])
        if last_hour == 23:
            cols["day_of_year"][-1] = last_day + 1
            cols["hour_of_day"][-1] = 0
        else:
            cols["hour_of_day"][-1] = last_hour + 1
        buildings.append(Building(b.attributes, BuildingSeries(**cols)))
    return ClusterDataset(
        climate_zone_id=ds.climate_zone_id,
        zone_profile=ds.zone_profile,
        buildings=buildings,
    )


def run_fixed_policy(
    ds_padded: ClusterDataset, env_cfg: EnvConfig, policy_fn
) -> np.ndarray:
    """District net-load series under a per-building schedule policy."""
    env = ClusterEnv(ds_padded, env_cfg)
    env.reset(0)
    hours = ds_padded.buildings[0].series.hour_of_day
    n = env.n_steps - 1
    out = np.empty(n)
    for t in range(n):
        actions = [
            policy_fn(int(hours[t]), b, env_cfg) for b in ds_padded.buildings
        ]
        _, p_net, _ = env.step(actions)
        out[t] = p_net.sum()
    return out


@dataclass
class Prepared:
    cfg: ExperimentConfig
    env_cfg: EnvConfig
    train: ClusterDataset
    test: ClusterDataset
    test_padded: ClusterDataset
    model: LinearForecaster
    bundles: dict
    cluster_net_forecast: np.ndarray  # (n_hours, HORIZON+1)
    no_storage_district: np.ndarray
    no_storage_raw: RawMetrics
    rbc_district: np.ndarray
    rbc_raw: RawMetrics
    eta_cooling_nominal: float
    demand_weights: np.ndarray

    @property
    def n_days(self) -> int:
        return self.test.n_hours // HOURS_PER_DAY


def _load_or_generate(cfg: ExperimentConfig) -> ClusterDataset:
    d = cfg.dataset
    if d.path is not None:
        p = Path(d.path)
        if not p.is_dir():
            raise ConfigError(f"dataset path is not a directory: {p}")
        try:
            return read_csv(p)
        except DatasetFormatError as exc:
            raise ConfigError(f"unreadable dataset at {p}: {exc}") from exc
    return generate_synthetic_cluster(d.seed, d.n_buildings, d.n_days, d.zone)


def prepare(cfg: ExperimentConfig) -> Prepared:
    """Collect data, fit the forecaster, precompute baselines and forecasts."""
    cfg.validate()
    env_cfg = cfg.env
    full = _load_or_generate(cfg)
    train, test = split_odd_even_months(full)
    model = fit_linear_forecaster(
        train,
        lags=cfg.forecaster.lags,
        ridge_lambda=cfg.forecaster.ridge_lambda,
        env_cfg=env_cfg,
    )
    bundles = runtime_forecasts(model, test, env_cfg)
    cluster_net_forecast = np.sum([b.p_net for b in bundles.values()], axis=0)
    baseline_net = baseline_net_series(test, env_cfg)
    no_storage_district = baseline_net.sum(axis=0)
    test_padded = _with_terminal_row(test)
    rbc_district = run_fixed_policy(test_padded, env_cfg, rbc_policy)
    return Prepared(
        cfg=cfg,
        env_cfg=env_cfg,
        train=train,
        test=test,
        test_padded=test_padded,
        model=model,
        bundles=bundles,
        cluster_net_forecast=cluster_net_forecast,
        no_storage_district=no_storage_district,
        no_storage_raw=compute_metrics(no_storage_district),
        rbc_district=rbc_district,
        rbc_raw=compute_metrics(rbc_district),
        eta_cooling_nominal=float(np.mean(cop_series(train, env_cfg))),
        demand_weights=np.array(
            [b.attributes.annual_electric_kwh for b in test.buildings]
        ),
    )


# ---------------------------------------------------------------------------
# The training epoch
# ---------------------------------------------------------------------------


@dataclass
class EpochResult:
    report: CostReport
    district: np.ndarray
    f_history: list
    kappa_rows: list
    policy: AggregatorPolicy
    optimizer_state: dict | None
    solver_failures: int
    runtime_s: float


def run_policy_epoch(
    prepared: Prepared,
    seed: int,
    aggregator_cfg: AggregatorConfig | None = None,
    controller_cfg: ControllerConfig | None = None,
) -> EpochResult:
    """One pass over the test epoch with daily policy perturbation.

    Each day runs under one perturbed copy of the policy; its return is the
    negative mean of the day's four cost ratios against the rule-based
    schedule. Every ``pop_size`` days the accumulated batch updates the
    policy. With ``sigma == 0`` the policy is frozen and only the building
    controllers keep identifying their device parameters.
    """
    started = time.perf_counter()
    acfg = aggregator_cfg or prepared.cfg.aggregator
    ccfg = controller_cfg or prepared.cfg.controller
    t_hor = acfg.horizon
    rng = np.random.default_rng(seed)

    controllers = []
    for i, b in enumerate(prepared.test.buildings):
        nominal = device_models_from_attributes(
            b.attributes, prepared.env_cfg, prepared.eta_cooling_nominal
        )
        devices = randomize_device_models(nominal, rng, ccfg.init_spread)
        controllers.append(
            BuildingController(
                i,
                devices,
                horizon=t_hor,
                adagrad_lr=ccfg.adagrad_lr,
                settings=CONTROLLER_ADMM,
            )
        )

    base = AggregatorPolicy.initial(t_hor, prepared.demand_weights)
    if acfg.filter_init == "identity":
        base = AggregatorPolicy(identity_filter(t_hor), base.phi_logits, t_hor)
    training = acfg.sigma > 0
    opt = (
        NesOptimizer(base.to_flat(), acfg.alpha, acfg.sigma, acfg.pop_size)
        if training
        else None
    )

    env = ClusterEnv(prepared.test_padded, prepared.env_cfg)
    obs = env.reset(0)
    n_hours = prepared.test.n_hours
    n_days = prepared.n_days
    n_b = len(controllers)
    district = np.empty(n_hours)
    history: list[float] = []
    f_history = []
    kappa_rows = []

    for d in range(n_days):
        theta = opt.propose(rng) if training else base.to_flat()
        pol = AggregatorPolicy.from_flat(theta, t_hor, n_b)
        shares = pol.shares()
        for h in range(HOURS_PER_DAY):
            t = d * HOURS_PER_DAY + h
            fc = prepared.cluster_net_forecast[t, : t_hor + 1]
            shifts = plan_load_shift(pol, history[-t_hor:], fc)
            commands = apportion(shifts, shares)
            actions = []
            socs_before = []
            for i, ctrl in enumerate(controllers):
                bnd = prepared.bundles[i]
                q0s = {
                    "cooling": bnd.q0_cooling[t, :t_hor],
                    "dhw": bnd.q0_dhw[t, :t_hor],
                }
                sb = {
                    "cooling": obs[i].cooling_soc_kwh,
                    "dhw": obs[i].dhw_soc_kwh,
                }
                socs_before.append(sb)
                action, _ = ctrl.act(commands[i], q0s, sb)
                actions.append(action)
            obs, p_net, infos = env.step(actions)
            for i, ctrl in enumerate(controllers):
                ctrl.observe(
                    forecast_net_kwh=prepared.bundles[i].p_net[t, 0],
                    actual_net_kwh=float(p_net[i]),
                    applied={
                        "cooling": infos[i]["applied_cooling_charge_kwh"],
                        "dhw": infos[i]["applied_dhw_charge_kwh"],
                    },
                    soc_before=socs_before[i],
                    soc_after={
                        "cooling": obs[i].cooling_soc_kwh,
                        "dhw": obs[i].dhw_soc_kwh,
                    },
                )
            tot = float(p_net.sum())
            district[t] = tot
            history.append(tot)
        day = slice(d * HOURS_PER_DAY, (d + 1) * HOURS_PER_DAY)
        f_d = daily_return(district[day], prepared.rbc_district[day])
        f_history.append(f_d)
        for ctrl in controllers:
            kappa_rows.append(ctrl.end_of_day_update())
        if training:
            opt.record(f_d)

    raw = compute_metrics(district)
    final = AggregatorPolicy.from_flat(
        opt.theta if training else base.to_flat(), t_hor, n_b
    )
    opt_state = None
    if training:
        # The checkpoint carries the generator position so a continued run
        # would draw the same perturbation stream the epoch would have.
        opt_state = opt.state_dict()
        opt_state["rng_state"] = rng.bit_generator.state
    return EpochResult(
        report=normalized_cost(raw, prepared.rbc_raw),
        district=district,
        f_history=f_history,
        kappa_rows=kappa_rows,
        policy=final,
        optimizer_state=opt_state,
        solver_failures=sum(c.solver_failures for c in controllers),
        runtime_s=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

KAPPA_COLUMNS = (
    "building",
    "day",
    "loss",
    "n_samples",
    "cooling_eta",
    "cooling_decay",
    "cooling_gain",
    "dhw_eta",
    "dhw_decay",
    "dhw_gain",
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path: Path, header: tuple, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_kappa_trace(path: Path, rows: list) -> None:
    out = []
    for r in rows:
        out.append(tuple(r.get(k) for k in KAPPA_COLUMNS))
    _write_rows(path, KAPPA_COLUMNS, out)


def write_f_history(path: Path, f_history: list) -> None:
    _write_rows(
        path,
        ("day", "f_return"),
        [(d + 1, f) for d, f in enumerate(f_history)],
    )


def write_nes_trace(path: Path, trace: list, pop_size: int) -> None:
    """One row per completed optimizer batch: spread, step size, returns.

    A frozen run produces only the header. Skipped batches appear with
    applied=0 and a zero step so degenerate stretches stay visible.
    """
    header = ("batch", "applied", "sigma_r", "step_norm") + tuple(
        f"f_{i + 1}" for i in range(pop_size)
    )
    rows = [
        (r["batch"], int(r["applied"]), r["sigma_r"], r["step_norm"])
        + tuple(r["returns"])
        for r in trace
    ]
    _write_rows(path, header, rows)


def write_district_series(
    path: Path, policy: np.ndarray, rbc: np.ndarray, no_storage: np.ndarray
) -> None:
    rows = [
        (t, policy[t], rbc[t], no_storage[t]) for t in range(policy.shape[0])
    ]
    _write_rows(path, ("hour", "policy_kwh", "rbc_kwh", "no_storage_kwh"), rows)


def write_manifest(out_dir: Path, command: str, cfg: ExperimentConfig, seed, outputs, runtime_s) -> None:
    manifest = {
        "package": "flexcluster",
        "version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config": cfg.to_dict(),
        "outputs": sorted(outputs),
        "runtime_s": runtime_s,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _report_to_dict(report: CostReport) -> dict:
    return json.loads(report.to_json())


def run_baselines(prepared: Prepared) -> dict:
    """Cost reports for the two fixed policies over the test epoch."""
    return {
        "rbc": normalized_cost(prepared.rbc_raw, prepared.rbc_raw),
        "no_storage": normalized_cost(prepared.no_storage_raw, prepared.rbc_raw),
    }


def run_experiment(
    cfg: ExperimentConfig,
    seed: int,
    out_dir: str | Path,
    prepared: Prepared | None = None,
) -> EpochResult:
    """Full pipeline for one seed; writes all artifacts under ``out_dir``."""
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if prepared is None:
        prepared = prepare(cfg)
    result = run_policy_epoch(prepared, seed)
    baselines = run_baselines(prepared)

    cost_payload = {
        "seed": seed,
        "zone": prepared.test.zone_profile,
        "test_days": prepared.n_days,
        "n_buildings": prepared.test.n_buildings,
        "policy": _report_to_dict(result.report),
        "rbc": _report_to_dict(baselines["rbc"]),
        "no_storage": _report_to_dict(baselines["no_storage"]),
        "solver_failures": result.solver_failures,
    }
    (out / "cost_report.json").write_text(json.dumps(cost_payload, indent=2) + "\n")
    write_f_history(out / "f_history.csv", result.f_history)
    trace = result.optimizer_state["trace"] if result.optimizer_state else []
    write_nes_trace(out / "nes_trace.csv", trace, cfg.aggregator.pop_size)
    write_kappa_trace(out / "kappa_trace.csv", result.kappa_rows)
    policy_payload = {
        "policy": json.loads(result.policy.to_json()),
        "optimizer": result.optimizer_state,
    }
    (out / "policy.json").write_text(json.dumps(policy_payload, indent=2) + "\n")
    (out / "forecaster.json").write_text(prepared.model.to_json() + "\n")
    write_district_series(
        out / "district_series.csv",
        result.district,
        prepared.rbc_district,
        prepared.no_storage_district,
    )
    rows = per_horizon_report(prepared.model, prepared.test, prepared.env_cfg)
    _write_rows(
        out / "forecast_report.csv",
        ("horizon", "model_rmse", "model_mape_pct", "persistence_rmse", "persistence_mape_pct"),
        [
            (
                r["horizon"],
                r["model_rmse"],
                r["model_mape_pct"],
                r["persistence_rmse"],
                r["persistence_mape_pct"],
            )
            for r in rows
        ],
    )
    outputs = [
        "cost_report.json",
        "f_history.csv",
        "nes_trace.csv",
        "kappa_trace.csv",
        "policy.json",
        "forecaster.json",
        "district_series.csv",
        "forecast_report.csv",
    ]
    write_manifest(out, "run", cfg, seed, outputs, time.perf_counter() - started)
    return result


def write_baseline_artifacts(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare(cfg)
    baselines = run_baselines(prepared)
    payload = {
        "zone": prepared.test.zone_profile,
        "test_days": prepared.n_days,
        "rbc": _report_to_dict(baselines["rbc"]),
        "no_storage": _report_to_dict(baselines["no_storage"]),
    }
    (out / "baselines.json").write_text(json.dumps(payload, indent=2) + "\n")
    write_district_series(
        out / "district_series.csv",
        prepared.no_storage_district,
        prepared.rbc_district,
        prepared.no_storage_district,
    )
    write_manifest(
        out,
        "baselines",
        cfg,
        None,
        ["baselines.json", "district_series.csv"],
        time.perf_counter() - started,
    )
    return payload


def write_dataset_artifacts(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    started = time.perf_counter()
    out = Path(out_dir)
    if cfg.dataset.path is not None:
        raise ConfigError(
            "dataset generation needs generation parameters; "
            "[dataset].path already names an existing dataset"
        )
    ds = generate_synthetic_cluster(
        cfg.dataset.seed, cfg.dataset.n_buildings, cfg.dataset.n_days, cfg.dataset.zone
    )
    target = out / "dataset"
    write_csv(ds, target)
    outputs = [f"dataset/{p.name}" for p in sorted(target.iterdir())]
    write_manifest(out, "gen-data", cfg, cfg.dataset.seed, outputs, time.perf_counter() - started)
    return target


def write_forecaster_artifacts(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.validate()
    env_cfg = cfg.env
    full = _load_or_generate(cfg)
    train, test = split_odd_even_months(full)
    model = fit_linear_forecaster(
        train,
        lags=cfg.forecaster.lags,
        ridge_lambda=cfg.forecaster.ridge_lambda,
        env_cfg=env_cfg,
    )
    (out / "forecaster.json").write_text(model.to_json() + "\n")
    rows = per_horizon_report(model, test, env_cfg)
    _write_rows(
        out / "forecast_report.csv",
        ("horizon", "model_rmse", "model_mape_pct", "persistence_rmse", "persistence_mape_pct"),
        [
            (
                r["horizon"],
                r["model_rmse"],
                r["model_mape_pct"],
                r["persistence_rmse"],
                r["persistence_mape_pct"],
            )
            for r in rows
        ],
    )
    write_manifest(
        out,
        "train-forecaster",
        cfg,
        None,
        ["forecaster.json", "forecast_report.csv"],
        time.perf_counter() - started,
    )
    summary = rows[-1]
    return summary


def _sweep_cell(cfg: ExperimentConfig, seed: int, out_dir: Path) -> float:
    """One isolated (config, seed) cell; returns its total cost."""
    return run_experiment(cfg, seed, out_dir).report.total_cost


def run_sweep(
    cfg: ExperimentConfig, seeds: list, out_dir: str | Path, workers: int = 1
) -> dict:
    """The same experiment across seeds, with a mean/std summary.

    With ``workers > 1`` the cells run in separate processes, each with its
    own output directory and a fresh data preparation, so the artifacts are
    identical to a sequential sweep.
    """
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_sweep_cell, cfg, s, out / f"seed_{s}") for s in seeds
            ]
            totals = [f.result() for f in futures]
    else:
        prepared = prepare(cfg)
        totals = [
            run_experiment(cfg, s, out / f"seed_{s}", prepared=prepared).report.total_cost
            for s in seeds
        ]
    summary = {
        "zone": cfg.dataset.zone if cfg.dataset.path is None else cfg.dataset.path,
        "seeds": list(seeds),
        "total_costs": totals,
        "mean_total_cost": float(np.mean(totals)),
        "std_total_cost": float(np.std(totals)),
    }
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_manifest(
        out,
        "sweep",
        cfg,
        list(seeds),
        ["sweep_summary.json"] + [f"seed_{s}/" for s in seeds],
        time.perf_counter() - started,
    )
    return summary


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


def write_report_artifacts(out_dir: str | Path) -> dict:
    """Consolidated JSON summary plus a plot-ready per-metric CSV.

    A pure function of the run's ``cost_report.json``: rerunning it
    rewrites the same bytes. The commentary block ranks the metrics by how
    much the learned policy improved each one relative to the reference
    schedule.
    """
    out = Path(out_dir)
    cost_path = out / "cost_report.json"
    if not cost_path.is_file():
        raise FileNotFoundError(f"no cost_report.json under {out}")
    payload = json.loads(cost_path.read_text())
    pol, nos = payload["policy"], payload["no_storage"]
    rows = [
        (name, pol["ratios"][name], nos["ratios"][name], (1.0 - pol["ratios"][name]) * 100.0)
        for name in pol["ratios"]
    ]
    rows.append(
        (
            "total_cost",
            pol["total_cost"],
            nos["total_cost"],
            (1.0 - pol["total_cost"]) * 100.0,
        )
    )
    _write_rows(
        out / "metric_breakdown.csv",
        ("metric", "policy_ratio", "no_storage_ratio", "policy_improvement_pct"),
        rows,
    )
    ranked = sorted(pol["ratios"], key=lambda k: pol["ratios"][k])
    summary = {
        "zone": payload["zone"],
        "seed": payload["seed"],
        "test_days": payload["test_days"],
        "n_buildings": payload["n_buildings"],
        "policy": pol,
        "rbc": payload["rbc"],
        "no_storage": nos,
        "solver_failures": payload["solver_failures"],
        "commentary": {
            "improvement_pct_by_metric": {
                k: (1.0 - v) * 100.0 for k, v in pol["ratios"].items()
            },
            "total_improvement_pct": (1.0 - pol["total_cost"]) * 100.0,
            "most_improved_metric": ranked[0],
            "least_improved_metric": ranked[-1],
        },
    }
    (out / "report_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def render_report(out_dir: str | Path) -> str:
    """Human-readable summary of a finished run directory."""
    out = Path(out_dir)
    cost_path = out / "cost_report.json"
    if not cost_path.is_file():
        raise FileNotFoundError(f"no cost_report.json under {out}")
    payload = json.loads(cost_path.read_text())
    lines = [
        f"cluster zone={payload['zone']}  buildings={payload['n_buildings']}"
        f"  test days={payload['test_days']}  seed={payload['seed']}",
        "",
        f"{'metric':<28}{'policy':>10}{'no_storage':>14}   (RBC = 1)",
    ]
    pol = payload["policy"]
    nos = payload["no_storage"]
    for name in pol["ratios"]:
        lines.append(
            f"{name:<28}{pol['ratios'][name]:>10.4f}{nos['ratios'][name]:>14.4f}"
        )
    lines.append(
        f"{'total_cost':<28}{pol['total_cost']:>10.4f}{nos['total_cost']:>14.4f}"
    )
    lines.append(f"\nsolver failures: {payload['solver_failures']}")

    fpath = out / "forecast_report.csv"
    if fpath.is_file():
        rows = fpath.read_text().strip().splitlines()
        last = rows[-1].split(",")
        if last and last[0] == "all":
            lines.append(
                f"forecaster MAPE {float(last[2]):.2f}% vs persistence {float(last[4]):.2f}%"
            )
    hpath = out / "f_history.csv"
    if hpath.is_file():
        rows = hpath.read_text().strip().splitlines()[1:]
        vals = np.array([float(r.split(",")[1]) for r in rows])
        if vals.size >= 20:
            lines.append(
                f"daily return first 10 days {vals[:10].mean():.4f}, "
                f"last 10 days {vals[-10:].mean():.4f}"
            )
    return "\n".join(lines) + "\n"
