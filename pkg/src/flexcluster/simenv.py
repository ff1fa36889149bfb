"""Closed-loop cluster environment: tanks, hourly balance, baselines.

The plant is intentionally small: each building owns a chilled-water tank
(fed by a heat pump whose COP falls with outdoor temperature) and optionally
a DHW tank (fed by a resistive heater with fixed efficiency).  One step is
one hour; actions are signed thermal charges per tank, clipped by the
environment to rate, SOC and served-demand limits.  The hourly electric
balance per building is

    P = nonshiftable
        + (cooling_demand + cooling_charge) / COP
        + (dhw_demand + dhw_charge) / eta_dhw
        - solar_capacity * solar_gen_per_unit

and holds exactly for the applied (post-clip) action.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import Building, ClusterDataset

__all__ = [
    "CopParams",
    "EnvConfig",
    "StorageState",
    "EnvAction",
    "Observation",
    "ClusterEnv",
    "rbc_policy",
    "no_storage_policy",
    "cop_series",
    "baseline_total_series",
    "baseline_net_series",
]


@dataclass(frozen=True)
class CopParams:
    """Piecewise-linear heat-pump COP versus outdoor temperature."""

    c0: float = 3.2
    c1: float = 0.05
    t_ref_c: float = 10.0
    cop_min: float = 1.5
    cop_max: float = 4.5

    def at(self, temp_c):
        raw = self.c0 - self.c1 * np.maximum(0.0, np.asarray(temp_c) - self.t_ref_c)
        return np.clip(raw, self.cop_min, self.cop_max)


@dataclass(frozen=True)
class EnvConfig:
    cop: CopParams = field(default_factory=CopParams)
    eta_dhw: float = 0.9
    storage_loss_coeff: float = 0.006  # fraction of SOC lost per hour
    rate_fraction: float = 1.0 / 3.0  # tank charge/discharge limit, per hour
    soc_init_fraction: float = 0.5
    rbc_charge_rate: float = 0.10  # fraction of capacity per hour
    rbc_discharge_rate: float = 0.08
    rbc_charge_start: int = 22  # inclusive, wraps midnight
    rbc_charge_end: int = 6
    rbc_discharge_start: int = 9  # inclusive
    rbc_discharge_end: int = 20

    def __post_init__(self) -> None:
        if not 0.0 < self.eta_dhw <= 1.0:
            raise ValueError("eta_dhw must lie in (0, 1]")
        if not 0.0 <= self.storage_loss_coeff < 1.0:
            raise ValueError("storage_loss_coeff must lie in [0, 1)")


@dataclass
class StorageState:
    soc_kwh: float
    capacity_kwh: float
    loss_coeff: float
    max_charge_kwh: float
    max_discharge_kwh: float

    def __post_init__(self) -> None:
        if self.capacity_kwh <= 0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.soc_kwh <= self.capacity_kwh:
            raise ValueError("soc outside [0, capacity]")


@dataclass(frozen=True)
class EnvAction:
    cooling_charge_kwh: float = 0.0
    dhw_charge_kwh: float = 0.0


@dataclass
class Observation:
    """Per-building view returned each step; JSON-friendly via to_dict."""

    building_id: int
    t: int
    day_of_year: int
    hour_of_day: int
    day_type: int
    outdoor_temp_c: float
    outdoor_rh_pct: float
    diffuse_solar_wm2: float
    direct_solar_wm2: float
    nonshiftable_kwh: float
    cooling_demand_kwh: float
    dhw_demand_kwh: float
    solar_gen_per_unit: float
    cooling_soc_kwh: float
    dhw_soc_kwh: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _clip_charge(
    requested: float, tank: StorageState, demand_kwh: float
) -> tuple[float, float]:
    """Apply rate, SOC and served-demand limits; return (applied, next_soc)."""
    retained = (1.0 - tank.loss_coeff) * tank.soc_kwh
    lower = max(-tank.max_discharge_kwh, -retained, -demand_kwh)
    upper = min(tank.max_charge_kwh, tank.capacity_kwh - retained)
    applied = float(np.clip(requested, lower, upper))
    return applied, retained + applied


class ClusterEnv:
    """Sequential hourly simulator over one ClusterDataset."""

    def __init__(self, ds: ClusterDataset, config: EnvConfig | None = None):
        ds.validate(require_contiguous=False)
        self.ds = ds
        self.config = config or EnvConfig()
        self.t = 0
        self._tanks: list[dict[str, StorageState]] = []
        self.reset(0)

    @property
    def n_steps(self) -> int:
        return self.ds.n_hours

    def _make_tank(self, capacity: float) -> StorageState:
        cfg = self.config
        return StorageState(
            soc_kwh=cfg.soc_init_fraction * capacity,
            capacity_kwh=capacity,
            loss_coeff=cfg.storage_loss_coeff,
            max_charge_kwh=cfg.rate_fraction * capacity,
            max_discharge_kwh=cfg.rate_fraction * capacity,
        )

    def reset(self, t0: int = 0) -> list[Observation]:
        if not 0 <= t0 < self.n_steps - 1:
            raise IndexError(
                f"t0={t0} leaves no step to take (dataset has {self.n_steps} hours)"
            )
        self.t = t0
        self._tanks = []
        for b in self.ds.buildings:
            tanks = {"cooling": self._make_tank(b.attributes.cooling_tank_capacity_kwh)}
            if b.attributes.has_dhw_tank:
                tanks["dhw"] = self._make_tank(b.attributes.dhw_tank_capacity_kwh)
            self._tanks.append(tanks)
        return self.observations()

    def observations(self) -> list[Observation]:
        out = []
        for i, b in enumerate(self.ds.buildings):
            s = b.series
            t = self.t
            tanks = self._tanks[i]
            out.append(
                Observation(
                    building_id=b.attributes.building_id,
                    t=t,
                    day_of_year=int(s.day_of_year[t]),
                    hour_of_day=int(s.hour_of_day[t]),
                    day_type=int(s.day_type[t]),
                    outdoor_temp_c=float(s.outdoor_temp_c[t]),
                    outdoor_rh_pct=float(s.outdoor_rh_pct[t]),
                    diffuse_solar_wm2=float(s.diffuse_solar_wm2[t]),
                    direct_solar_wm2=float(s.direct_solar_wm2[t]),
                    nonshiftable_kwh=float(s.nonshiftable_kwh[t]),
                    cooling_demand_kwh=float(s.cooling_demand_kwh[t]),
                    dhw_demand_kwh=float(s.dhw_demand_kwh[t]),
                    solar_gen_per_unit=float(s.solar_gen_per_unit[t]),
                    cooling_soc_kwh=tanks["cooling"].soc_kwh,
                    dhw_soc_kwh=tanks["dhw"].soc_kwh if "dhw" in tanks else 0.0,
                )
            )
        return out

    def step(
        self, actions: list[EnvAction]
    ) -> tuple[list[Observation], np.ndarray, list[dict]]:
        """Apply one action per building; returns (next_obs, P per building, info)."""
        if self.t >= self.n_steps - 1:
            raise IndexError("environment exhausted; reset before stepping again")
        if len(actions) != self.ds.n_buildings:
            raise ValueError("one action per building required")
        cfg = self.config
        p_net = np.zeros(self.ds.n_buildings)
        infos: list[dict] = []
        for i, (b, act) in enumerate(zip(self.ds.buildings, actions)):
            s = b.series
            t = self.t
            tanks = self._tanks[i]
            cop = float(cfg.cop.at(s.outdoor_temp_c[t]))
            cool_dem = float(s.cooling_demand_kwh[t])
            dhw_dem = float(s.dhw_demand_kwh[t])

            u_cool, soc_cool = _clip_charge(
                float(act.cooling_charge_kwh), tanks["cooling"], cool_dem
            )
            tanks["cooling"].soc_kwh = soc_cool
            if "dhw" in tanks:
                u_dhw, soc_dhw = _clip_charge(
                    float(act.dhw_charge_kwh), tanks["dhw"], dhw_dem
                )
                tanks["dhw"].soc_kwh = soc_dhw
            else:
                u_dhw = 0.0

            cooling_electric = (cool_dem + u_cool) / cop
            dhw_electric = (dhw_dem + u_dhw) / cfg.eta_dhw if "dhw" in tanks else 0.0
            solar = b.attributes.solar_capacity_kw * float(s.solar_gen_per_unit[t])
            p = float(s.nonshiftable_kwh[t]) + cooling_electric + dhw_electric - solar
            p_net[i] = p
            infos.append(
                {
                    "applied_cooling_charge_kwh": u_cool,
                    "applied_dhw_charge_kwh": u_dhw,
                    "cooling_electric_kwh": cooling_electric,
                    "dhw_electric_kwh": dhw_electric,
                    "solar_kwh": solar,
                    "cop_cooling": cop,
                }
            )
        self.t += 1
        return self.observations(), p_net, infos

    def device_specs(self, i: int) -> dict[str, StorageState]:
        """Copies of building i's tank descriptors (not live state)."""
        return {k: replace(v) for k, v in self._tanks[i].items()}


# ---------------------------------------------------------------------------
# Baseline policies
# ---------------------------------------------------------------------------


def _in_wrapped_window(hour: int, start: int, end: int) -> bool:
    if start <= end:
        return start <= hour <= end
    return hour >= start or hour <= end


def rbc_policy(
    hour_of_day: int, building: Building, cfg: EnvConfig
) -> EnvAction:
    """Fixed schedule: charge overnight, discharge through the day.

    Rates are fractions of each tank's capacity; the environment clips
    whatever the schedule over-asks.
    """
    attrs = building.attributes
    if _in_wrapped_window(hour_of_day, cfg.rbc_charge_start, cfg.rbc_charge_end):
        frac = cfg.rbc_charge_rate
    elif _in_wrapped_window(
        hour_of_day, cfg.rbc_discharge_start, cfg.rbc_discharge_end
    ):
        frac = -cfg.rbc_discharge_rate
    else:
        frac = 0.0
    return EnvAction(
        cooling_charge_kwh=frac * attrs.cooling_tank_capacity_kwh,
        dhw_charge_kwh=frac * attrs.dhw_tank_capacity_kwh if attrs.has_dhw_tank else 0.0,
    )


def no_storage_policy() -> EnvAction:
    return EnvAction(0.0, 0.0)


# ---------------------------------------------------------------------------
# Vectorized zero-action series (no stepping required)
# ---------------------------------------------------------------------------


def cop_series(ds: ClusterDataset, cfg: EnvConfig) -> np.ndarray:
    """Hourly heat-pump COP per building, shape (n_buildings, n_hours)."""
    return np.vstack(
        [cfg.cop.at(b.series.outdoor_temp_c) for b in ds.buildings]
    )


def baseline_total_series(ds: ClusterDataset, cfg: EnvConfig) -> np.ndarray:
    """Total electric load with zero storage action, before solar netting."""
    cops = cop_series(ds, cfg)
    rows = []
    for i, b in enumerate(ds.buildings):
        s = b.series
        dhw = s.dhw_demand_kwh / cfg.eta_dhw if b.attributes.has_dhw_tank else 0.0
        rows.append(s.nonshiftable_kwh + s.cooling_demand_kwh / cops[i] + dhw)
    return np.vstack(rows)


def baseline_net_series(ds: ClusterDataset, cfg: EnvConfig) -> np.ndarray:
    """Net load with zero storage action: total minus PV generation."""
    total = baseline_total_series(ds, cfg)
    solar = np.vstack(
        [
            b.attributes.solar_capacity_kw * b.series.solar_gen_per_unit
            for b in ds.buildings
        ]
    )
    return total - solar
