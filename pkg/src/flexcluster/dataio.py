"""Synthetic cluster datasets: generation, persistence, train/test split.

A cluster is a set of buildings sharing one weather stream.  Each building
carries static attributes (device sizes, PV capacity) and an hourly series of
weather, end-use demands and per-unit PV generation.  Generation is a pure
function of (seed, n_buildings, n_days, zone_profile), so every experiment is
reproducible from its config alone.

On disk a cluster is a directory: ``attributes.json`` keyed by building id,
``meta.json`` with cluster-level fields, and one ``building_<id>.csv`` per
building with a fixed column order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TIMESERIES_COLUMNS",
    "ZONE_PROFILES",
    "BuildingAttributes",
    "BuildingSeries",
    "Building",
    "ClusterDataset",
    "DatasetFormatError",
    "generate_synthetic_cluster",
    "split_odd_even_months",
    "write_csv",
    "read_csv",
]

TIMESERIES_COLUMNS = (
    "day_of_year",
    "hour_of_day",
    "day_type",
    "outdoor_temp_c",
    "outdoor_rh_pct",
    "diffuse_solar_wm2",
    "direct_solar_wm2",
    "nonshiftable_kwh",
    "cooling_demand_kwh",
    "dhw_demand_kwh",
    "solar_gen_per_unit",
)

_INT_COLUMNS = ("day_of_year", "hour_of_day", "day_type")
_ENERGY_COLUMNS = (
    "nonshiftable_kwh",
    "cooling_demand_kwh",
    "dhw_demand_kwh",
    "solar_gen_per_unit",
    "diffuse_solar_wm2",
    "direct_solar_wm2",
)

DAYS_PER_MONTH = 30  # "month" means a 30-day block of day_of_year throughout


class DatasetFormatError(ValueError):
    """Raised when stored data violates the documented schema."""


@dataclass(frozen=True)
class BuildingAttributes:
    building_id: int
    building_type: str
    solar_capacity_kw: float
    has_dhw_tank: bool
    cooling_tank_capacity_kwh: float
    dhw_tank_capacity_kwh: float
    heat_pump_rated_kw: float
    heater_rated_kw: float
    annual_cooling_kwh: float
    annual_dhw_kwh: float
    annual_electric_kwh: float

    def validate(self) -> None:
        if self.solar_capacity_kw < 0:
            raise ValueError(f"building {self.building_id}: negative PV capacity")
        if self.cooling_tank_capacity_kwh <= 0 or self.heat_pump_rated_kw <= 0:
            raise ValueError(
                f"building {self.building_id}: cooling device sizes must be positive"
            )
        if self.has_dhw_tank:
            if self.dhw_tank_capacity_kwh <= 0 or self.heater_rated_kw <= 0:
                raise ValueError(
                    f"building {self.building_id}: DHW tank present but unsized"
                )
        else:
            if self.dhw_tank_capacity_kwh != 0 or self.heater_rated_kw != 0:
                raise ValueError(
                    f"building {self.building_id}: DHW fields must be zero without a tank"
                )
        for name in ("annual_cooling_kwh", "annual_dhw_kwh", "annual_electric_kwh"):
            if getattr(self, name) < 0:
                raise ValueError(f"building {self.building_id}: negative {name}")


@dataclass
class BuildingSeries:
    """Column-array form of one building's hourly records."""

    day_of_year: np.ndarray
    hour_of_day: np.ndarray
    day_type: np.ndarray
    outdoor_temp_c: np.ndarray
    outdoor_rh_pct: np.ndarray
    diffuse_solar_wm2: np.ndarray
    direct_solar_wm2: np.ndarray
    nonshiftable_kwh: np.ndarray
    cooling_demand_kwh: np.ndarray
    dhw_demand_kwh: np.ndarray
    solar_gen_per_unit: np.ndarray

    @property
    def n_hours(self) -> int:
        return self.day_of_year.shape[0]

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def time_index(self) -> np.ndarray:
        """Absolute hour index (day_of_year - 1) * 24 + hour_of_day."""
        return (self.day_of_year - 1) * 24 + self.hour_of_day

    def take(self, idx: np.ndarray) -> "BuildingSeries":
        return BuildingSeries(
            **{c: self.column(c)[idx] for c in TIMESERIES_COLUMNS}
        )

    def validate(self, require_contiguous: bool = True) -> None:
        n = self.n_hours
        for c in TIMESERIES_COLUMNS:
            if self.column(c).shape != (n,):
                raise DatasetFormatError(f"column {c} has inconsistent length")
        ti = self.time_index()
        if np.any(np.diff(ti) <= 0):
            row = int(np.argmax(np.diff(ti) <= 0)) + 1
            raise DatasetFormatError(f"non-monotone timestamps at row {row}")
        if require_contiguous and np.any(np.diff(ti) != 1):
            row = int(np.argmax(np.diff(ti) != 1)) + 1
            raise DatasetFormatError(f"missing hour before row {row}")
        for c in _ENERGY_COLUMNS:
            vals = self.column(c)
            if np.any(~np.isfinite(vals)):
                row = int(np.argmax(~np.isfinite(vals)))
                raise DatasetFormatError(f"non-finite {c} at row {row}")
            if np.any(vals < 0):
                row = int(np.argmax(vals < 0))
                raise DatasetFormatError(f"negative {c} at row {row}")
        no_sun = (self.diffuse_solar_wm2 + self.direct_solar_wm2) == 0.0
        if np.any(self.solar_gen_per_unit[no_sun] > 0):
            raise DatasetFormatError("solar generation reported without irradiance")


@dataclass
class Building:
    attributes: BuildingAttributes
    series: BuildingSeries


@dataclass
class ClusterDataset:
    climate_zone_id: int
    zone_profile: str
    buildings: list[Building]

    @property
    def n_buildings(self) -> int:
        return len(self.buildings)

    @property
    def n_hours(self) -> int:
        return self.buildings[0].series.n_hours

    def validate(self, require_contiguous: bool = True) -> None:
        if not self.buildings:
            raise DatasetFormatError("cluster has no buildings")
        n = self.n_hours
        ref = self.buildings[0].series.time_index()
        for b in self.buildings:
            b.attributes.validate()
            b.series.validate(require_contiguous=require_contiguous)
            if b.series.n_hours != n or np.any(b.series.time_index() != ref):
                raise DatasetFormatError("buildings are not hour-aligned")


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZoneProfile:
    zone_id: int
    t_mean_c: float
    t_season_amp_c: float
    t_diurnal_amp_c: float
    rh_base_pct: float
    cloudiness: float  # 0 = always clear, 1 = heavily overcast
    cooling_balance_c: float


ZONE_PROFILES: dict[str, ZoneProfile] = {
    "hot_humid": ZoneProfile(1, 27.0, 3.5, 4.5, 74.0, 0.45, 18.0),
    "hot_dry": ZoneProfile(2, 26.0, 7.0, 9.0, 28.0, 0.18, 18.0),
    "warm_coastal": ZoneProfile(3, 22.0, 5.0, 5.5, 62.0, 0.40, 19.0),
    "mixed_inland": ZoneProfile(4, 21.0, 8.0, 7.0, 55.0, 0.38, 19.0),
}

_BUILDING_TYPES = ("residential", "residential", "office", "residential", "retail")

_HOLIDAY_DAYS = frozenset({1, 185, 359})


def _gaussian_bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def generate_synthetic_cluster(
    seed: int, n_buildings: int, n_days: int, zone_profile: str
) -> ClusterDataset:
    """Draw a deterministic synthetic cluster for one climate zone.

    Weather is shared across buildings: a seasonal + diurnal temperature
    sinusoid with autocorrelated daily anomalies, humidity anticorrelated
    with the temperature anomaly, and a clear-sky solar geometry modulated
    by a per-day cloud state.  Per-building demand combines type-specific
    occupancy bumps, weekday/weekend structure, temperature-driven cooling
    and seeded noise, all clipped at zero.
    """
    if n_buildings < 1:
        raise ValueError("n_buildings must be >= 1")
    if n_days < 2:
        raise ValueError("n_days must be >= 2 (lagged features need history)")
    if zone_profile not in ZONE_PROFILES:
        raise ValueError(
            f"unknown zone_profile {zone_profile!r}; options: {sorted(ZONE_PROFILES)}"
        )
    zone = ZONE_PROFILES[zone_profile]
    rng = np.random.default_rng(seed)
    n_hours = n_days * 24

    day = np.repeat(np.arange(1, n_days + 1), 24)
    hour = np.tile(np.arange(24), n_days)
    weekday = ((day - 1) % 7) + 1  # day 1 is a Monday
    day_type = np.where(np.isin(day, list(_HOLIDAY_DAYS)), 8, weekday)
    is_weekend = (weekday >= 6) | (day_type == 8)

    # Weather stream shared by the cluster.
    season = np.sin(2.0 * math.pi * (day - 110) / 365.0)
    diurnal = np.sin(2.0 * math.pi * (hour - 9) / 24.0)
    day_anom = np.zeros(n_days)
    shocks = rng.normal(0.0, 1.1, size=n_days)
    for d in range(1, n_days):
        day_anom[d] = 0.6 * day_anom[d - 1] + shocks[d]
    temp = (
        zone.t_mean_c
        + zone.t_season_amp_c * season
        + 0.5 * zone.t_diurnal_amp_c * diurnal
        + np.repeat(day_anom, 24)
        + rng.normal(0.0, 0.4, size=n_hours)
    )
    rh = np.clip(
        zone.rh_base_pct
        - 1.1 * (temp - zone.t_mean_c)
        + rng.normal(0.0, 4.0, size=n_hours),
        12.0,
        100.0,
    )

    elevation = np.maximum(0.0, np.sin(math.pi * (hour - 6) / 12.0))
    elevation *= np.where((hour >= 6) & (hour <= 18), 1.0, 0.0)
    clearness_day = np.clip(
        1.0 - zone.cloudiness * np.abs(rng.normal(0.0, 1.0, size=n_days)), 0.25, 1.0
    )
    clearness = np.clip(
        np.repeat(clearness_day, 24) + rng.normal(0.0, 0.05, size=n_hours), 0.15, 1.0
    )
    sun_up = elevation > 0.0
    direct = np.where(sun_up, 880.0 * elevation**1.25 * clearness**2, 0.0)
    diffuse = np.where(sun_up, 140.0 * elevation * (1.15 - 0.55 * clearness), 0.0)
    gen = np.where(
        sun_up,
        0.00085
        * (direct + 0.9 * diffuse)
        * (1.0 - 0.004 * np.maximum(temp - 25.0, 0.0)),
        0.0,
    )
    gen = np.clip(gen, 0.0, 1.0)

    buildings: list[Building] = []
    for b in range(n_buildings):
        btype = _BUILDING_TYPES[b % len(_BUILDING_TYPES)]
        base = rng.uniform(0.25, 0.7)
        morning_amp = rng.uniform(0.2, 0.5)
        evening_amp = rng.uniform(0.5, 1.1)
        midday_amp = rng.uniform(0.7, 1.4)
        cool_gain = rng.uniform(0.35, 0.8)  # kWh thermal per degC-hour
        has_dhw = rng.random() < 0.8
        dhw_amp = rng.uniform(0.8, 1.8)
        has_pv = rng.random() < 0.6
        pv_kw = float(np.round(rng.uniform(2.0, 8.0), 2)) if has_pv else 0.0
        noise_ns = rng.normal(0.0, 0.06, size=n_hours)
        noise_cool = rng.normal(0.0, 0.12, size=n_hours)
        noise_dhw = rng.normal(0.0, 0.05, size=n_hours)

        if btype == "office":
            occupancy = midday_amp * _gaussian_bump(hour, 13.0, 3.2)
            week_factor = np.where(is_weekend, 0.45, 1.0)
        elif btype == "retail":
            occupancy = midday_amp * 0.8 * np.clip(
                _gaussian_bump(hour, 15.0, 4.5), 0.0, 1.0
            )
            week_factor = np.where(is_weekend, 1.1, 1.0)
        else:
            occupancy = morning_amp * _gaussian_bump(
                hour, 7.5, 1.5
            ) + evening_amp * _gaussian_bump(hour, 19.5, 2.2)
            week_factor = np.where(is_weekend, 1.15, 1.0)

        nonshift = np.maximum(0.0, (base + occupancy) * week_factor + noise_ns)
        cooling = np.maximum(
            0.0,
            cool_gain
            * np.maximum(0.0, temp - zone.cooling_balance_c)
            * (0.75 + 0.35 * occupancy / max(occupancy.max(), 1e-9))
            + noise_cool,
        )
        if has_dhw:
            draws = dhw_amp * (
                _gaussian_bump(hour, 7.0, 1.3) + 0.8 * _gaussian_bump(hour, 20.0, 1.8)
            )
            dhw = np.maximum(0.0, (0.08 + draws) * week_factor + noise_dhw)
        else:
            dhw = np.zeros(n_hours)

        mean_cooling = max(float(cooling.mean()), 0.4)
        cool_cap = float(np.round(rng.uniform(3.2, 4.8) * mean_cooling, 2))
        peak_cooling = float(cooling.max())
        hp_kw = float(np.round((peak_cooling + cool_cap / 3.0) / 1.6 * 1.1 + 0.3, 2))
        if has_dhw:
            mean_daily_dhw = float(dhw.sum() / n_days)
            dhw_cap = float(np.round(max(rng.uniform(0.5, 0.8) * mean_daily_dhw, 1.0), 2))
            heater_kw = float(
                np.round((float(dhw.max()) + dhw_cap / 3.0) / 0.9 * 1.15 + 0.2, 2)
            )
        else:
            dhw_cap = 0.0
            heater_kw = 0.0

        annualize = 365.0 / n_days
        attrs = BuildingAttributes(
            building_id=b,
            building_type=btype,
            solar_capacity_kw=pv_kw,
            has_dhw_tank=has_dhw,
            cooling_tank_capacity_kwh=cool_cap,
            dhw_tank_capacity_kwh=dhw_cap,
            heat_pump_rated_kw=hp_kw,
            heater_rated_kw=heater_kw,
            annual_cooling_kwh=float(np.round(cooling.sum() * annualize, 1)),
            annual_dhw_kwh=float(np.round(dhw.sum() * annualize, 1)),
            annual_electric_kwh=float(
                np.round((nonshift.sum() + cooling.sum() / 3.0 + dhw.sum() / 0.9)
                         * annualize, 1)
            ),
        )
        series = BuildingSeries(
            day_of_year=day.copy(),
            hour_of_day=hour.copy(),
            day_type=day_type.copy(),
            outdoor_temp_c=temp.copy(),
            outdoor_rh_pct=rh.copy(),
            diffuse_solar_wm2=diffuse.copy(),
            direct_solar_wm2=direct.copy(),
            nonshiftable_kwh=nonshift,
            cooling_demand_kwh=cooling,
            dhw_demand_kwh=dhw,
            solar_gen_per_unit=gen.copy(),
        )
        buildings.append(Building(attrs, series))

    ds = ClusterDataset(
        climate_zone_id=zone.zone_id, zone_profile=zone_profile, buildings=buildings
    )
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------


def month_index(day_of_year: np.ndarray) -> np.ndarray:
    """1-based 30-day-block index of each day."""
    return (np.asarray(day_of_year) - 1) // DAYS_PER_MONTH + 1


def split_odd_even_months(
    ds: ClusterDataset,
) -> tuple[ClusterDataset, ClusterDataset]:
    """Partition into train (odd 30-day blocks) and test (even blocks).

    The union of the two parts is the input; order is preserved within each
    part.  Requires at least two full blocks.
    """
    days_present = np.unique(ds.buildings[0].series.day_of_year)
    if days_present.size < 2 * DAYS_PER_MONTH:
        raise ValueError("split needs at least 60 days of data")
    months = month_index(ds.buildings[0].series.day_of_year)
    train_mask = months % 2 == 1
    parts = []
    for mask in (train_mask, ~train_mask):
        idx = np.flatnonzero(mask)
        part = ClusterDataset(
            climate_zone_id=ds.climate_zone_id,
            zone_profile=ds.zone_profile,
            buildings=[
                Building(b.attributes, b.series.take(idx)) for b in ds.buildings
            ],
        )
        part.validate(require_contiguous=False)
        parts.append(part)
    return parts[0], parts[1]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def write_csv(ds: ClusterDataset, path: str | Path) -> None:
    """Store a cluster as attributes.json + meta.json + per-building CSVs."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    attrs = {str(b.attributes.building_id): asdict(b.attributes) for b in ds.buildings}
    (root / "attributes.json").write_text(json.dumps(attrs, indent=2) + "\n")
    meta = {
        "climate_zone_id": ds.climate_zone_id,
        "zone_profile": ds.zone_profile,
        "n_buildings": ds.n_buildings,
        "n_hours": ds.n_hours,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for b in ds.buildings:
        fname = root / f"building_{b.attributes.building_id}.csv"
        with open(fname, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TIMESERIES_COLUMNS)
            cols = [b.series.column(c) for c in TIMESERIES_COLUMNS]
            for i in range(b.series.n_hours):
                row = []
                for c, col in zip(TIMESERIES_COLUMNS, cols):
                    if c in _INT_COLUMNS:
                        row.append(int(col[i]))
                    else:
                        row.append(repr(float(col[i])))
                writer.writerow(row)


def _read_building_csv(fname: Path) -> BuildingSeries:
    with open(fname, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{fname.name}: empty file") from None
        if tuple(header) != TIMESERIES_COLUMNS:
            raise DatasetFormatError(
                f"{fname.name}: header mismatch, expected {','.join(TIMESERIES_COLUMNS)}"
            )
        raw: list[list[str]] = list(reader)
    data: dict[str, np.ndarray] = {}
    for j, c in enumerate(TIMESERIES_COLUMNS):
        try:
            if c in _INT_COLUMNS:
                data[c] = np.array([int(r[j]) for r in raw], dtype=np.int64)
            else:
                data[c] = np.array([float(r[j]) for r in raw], dtype=float)
        except (ValueError, IndexError) as exc:
            # Locate the offending row for the error message.
            for i, r in enumerate(raw):
                try:
                    int(r[j]) if c in _INT_COLUMNS else float(r[j])
                except (ValueError, IndexError):
                    raise DatasetFormatError(
                        f"{fname.name}: bad value for {c} at row {i + 2}"
                    ) from exc
            raise
    series = BuildingSeries(**data)
    try:
        series.validate(require_contiguous=True)
    except DatasetFormatError as exc:
        raise DatasetFormatError(f"{fname.name}: {exc}") from None
    return series


def read_csv(path: str | Path) -> ClusterDataset:
    """Load a cluster directory written by :func:`write_csv`."""
    root = Path(path)
    attrs_file = root / "attributes.json"
    if not attrs_file.exists():
        raise DatasetFormatError(f"missing {attrs_file}")
    attrs_raw = json.loads(attrs_file.read_text())
    meta_file = root / "meta.json"
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    buildings = []
    for key in sorted(attrs_raw, key=int):
        try:
            attrs = BuildingAttributes(**attrs_raw[key])
        except TypeError as exc:
            raise DatasetFormatError(f"attributes.json entry {key}: {exc}") from None
        fname = root / f"building_{attrs.building_id}.csv"
        if not fname.exists():
            raise DatasetFormatError(f"missing time series file {fname.name}")
        buildings.append(Building(attrs, _read_building_csv(fname)))
    ds = ClusterDataset(
        climate_zone_id=int(meta.get("climate_zone_id", 0)),
        zone_profile=str(meta.get("zone_profile", "unknown")),
        buildings=buildings,
    )
    ds.validate()
    return ds
