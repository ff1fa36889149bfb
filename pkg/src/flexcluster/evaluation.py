"""District-level cost metrics and the per-day learning signal.

All metrics operate on the district net-load series (sum over buildings),
clipped at zero first: exported surplus earns no credit.  Five raw metrics
are computed over an evaluation epoch, normalized by a rule-based baseline
run over the same epoch, and averaged into a single scalar cost.  For the
day-resolution learning signal only four of them are meaningful; the annual
peak is proxied by the daily peak.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "METRIC_NAMES",
    "RawMetrics",
    "CostReport",
    "compute_metrics",
    "normalized_cost",
    "daily_return",
]

METRIC_NAMES = (
    "net_consumption_kwh",
    "one_minus_load_factor",
    "ramping_kwh",
    "avg_daily_peak_kw",
    "annual_peak_kw",
)

HOURS_PER_DAY = 24
LOAD_FACTOR_BLOCK_DAYS = 30


@dataclass(frozen=True)
class RawMetrics:
    net_consumption_kwh: float
    one_minus_load_factor: float
    ramping_kwh: float
    avg_daily_peak_kw: float
    annual_peak_kw: float
    n_blocks_skipped: int = 0

    def values(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass(frozen=True)
class CostReport:
    raw: RawMetrics
    baseline: RawMetrics
    ratios: dict[str, float]
    total_cost: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "raw": asdict(self.raw),
                "baseline": asdict(self.baseline),
                "ratios": self.ratios,
                "total_cost": self.total_cost,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "CostReport":
        d = json.loads(text)
        return CostReport(
            raw=RawMetrics(**d["raw"]),
            baseline=RawMetrics(**d["baseline"]),
            ratios=d["ratios"],
            total_cost=d["total_cost"],
        )


def _district(series: np.ndarray) -> np.ndarray:
    d = np.maximum(0.0, np.asarray(series, dtype=float))
    if d.ndim != 1:
        raise ValueError("district series must be 1-d (already summed over buildings)")
    return d


def compute_metrics(series: np.ndarray, hours_per_day: int = HOURS_PER_DAY) -> RawMetrics:
    """Five epoch-level metrics of a district load series.

    The load-factor term is averaged over 30-day blocks (a trailing partial
    block counts if it has any load); blocks with all-zero load have no
    defined load factor and are skipped, with the count reported.
    """
    d = _district(series)
    if d.size == 0:
        raise ValueError("empty series")
    if d.size % hours_per_day != 0:
        raise ValueError("series length must be a whole number of days")
    days = d.reshape(-1, hours_per_day)
    block_len = LOAD_FACTOR_BLOCK_DAYS * hours_per_day
    lf_terms = []
    skipped = 0
    for start in range(0, d.size, block_len):
        block = d[start : start + block_len]
        peak = float(block.max())
        if peak <= 0.0:
            skipped += 1
            continue
        lf_terms.append(1.0 - float(block.mean()) / peak)
    return RawMetrics(
        net_consumption_kwh=float(d.sum()),
        one_minus_load_factor=float(np.mean(lf_terms)) if lf_terms else 0.0,
        ramping_kwh=float(np.sum(np.abs(np.diff(d)))),
        avg_daily_peak_kw=float(days.max(axis=1).mean()),
        annual_peak_kw=float(d.max()),
        n_blocks_skipped=skipped,
    )


def normalized_cost(candidate: RawMetrics, rbc: RawMetrics) -> CostReport:
    """Ratio of each metric to the rule-based baseline; cost is their mean."""
    ratios = {}
    for name in METRIC_NAMES:
        denom = getattr(rbc, name)
        if denom <= 0.0:
            raise ValueError(f"baseline metric {name} must be positive, got {denom}")
        ratios[name] = getattr(candidate, name) / denom
    total = sum(ratios.values()) / len(METRIC_NAMES)
    return CostReport(raw=candidate, baseline=rbc, ratios=ratios, total_cost=total)


def daily_return(day_candidate: np.ndarray, day_rbc: np.ndarray) -> float:
    """Learning signal for one day: negative mean of four baseline ratios.

    Uses daily net, ramping, peak and 1-load-factor; a ratio whose baseline
    value is zero is skipped for that day.  More negative is worse; a day
    identical to the baseline scores exactly -1.
    """
    cand = _district(day_candidate)
    rbc = _district(day_rbc)
    if cand.shape != rbc.shape or cand.size == 0:
        raise ValueError("candidate and baseline day must have equal, nonzero length")

    def day_stats(d: np.ndarray) -> tuple[float, float, float, float]:
        peak = float(d.max())
        one_minus_lf = 1.0 - float(d.mean()) / peak if peak > 0 else 0.0
        return (
            float(d.sum()),
            float(np.sum(np.abs(np.diff(d)))),
            peak,
            one_minus_lf,
        )

    ratios = []
    for c_val, r_val in zip(day_stats(cand), day_stats(rbc)):
        if r_val > 0.0:
            ratios.append(c_val / r_val)
    if not ratios:
        return -1.0
    return -float(np.mean(ratios))
