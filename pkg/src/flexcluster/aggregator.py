"""Cluster-level coordination: load-shaping filter, apportionment, NES training.

The aggregator owns two learnable objects. A symmetric filter ``omega`` of
length ``2T + 1`` slides over a window of past net loads and forecast net
loads to produce a reshaped cluster target, and a logit vector is projected
onto the probability simplex to decide how the requested shift is split
across buildings. Both are trained together, gradient-free, from scalar
daily returns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SIGMA_R_FLOOR = 1e-9


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-and-threshold: find the largest k such that
    ``v_(k) + (1 - sum of top k) / k > 0`` and clip against that shift.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex projection needs a nonempty 1-d vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / ks > 0.0
    k = ks[cond][-1]
    tau = (1.0 - css[k - 1]) / k
    return np.maximum(v + tau, 0.0)


def identity_filter(horizon: int) -> np.ndarray:
    """Filter whose target equals the current-hour forecast: zero shift."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    w = np.zeros(2 * horizon + 1)
    w[horizon] = 1.0
    return w


def moving_average_filter(horizon: int) -> np.ndarray:
    """Uniform smoothing filter, the default starting point for training."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n = 2 * horizon + 1
    return np.full(n, 1.0 / n)


def target_load(omega, window):
    """Reshaped load for one hour: inner product of filter and window."""
    omega = np.asarray(omega, dtype=float)
    window = np.asarray(window, dtype=float)
    if omega.shape != window.shape:
        raise ValueError(
            f"filter and window disagree: {omega.shape} vs {window.shape}"
        )
    return float(omega @ window)


@dataclass
class AggregatorPolicy:
    """Learnable cluster policy: shaping filter plus apportionment logits."""

    omega: np.ndarray
    phi_logits: np.ndarray
    horizon: int = 12

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.phi_logits = np.asarray(self.phi_logits, dtype=float)
        if self.omega.shape != (2 * self.horizon + 1,):
            raise ValueError(
                f"filter must have {2 * self.horizon + 1} taps for horizon "
                f"{self.horizon}, got {self.omega.shape}"
            )
        if self.phi_logits.ndim != 1 or self.phi_logits.size == 0:
            raise ValueError("need at least one building share")

    @property
    def n_buildings(self) -> int:
        return self.phi_logits.size

    def shares(self) -> np.ndarray:
        return project_simplex(self.phi_logits)

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.omega, self.phi_logits])

    @classmethod
    def from_flat(cls, vec, horizon: int, n_buildings: int) -> "AggregatorPolicy":
        vec = np.asarray(vec, dtype=float)
        n_taps = 2 * horizon + 1
        if vec.shape != (n_taps + n_buildings,):
            raise ValueError("flat vector length does not match policy shape")
        return cls(vec[:n_taps].copy(), vec[n_taps:].copy(), horizon)

    @classmethod
    def initial(cls, horizon: int, demand_weights) -> "AggregatorPolicy":
        """Moving-average filter and demand-proportional shares."""
        w = np.asarray(demand_weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("demand weights must be nonnegative with positive sum")
        return cls(moving_average_filter(horizon), w / w.sum(), horizon)

    def to_json(self) -> str:
        return json.dumps(
            {
                "horizon": self.horizon,
                "omega": self.omega.tolist(),
                "phi_logits": self.phi_logits.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "AggregatorPolicy":
        d = json.loads(text)
        return cls(np.array(d["omega"]), np.array(d["phi_logits"]), d["horizon"])


def plan_load_shift(policy: AggregatorPolicy, past_net, forecast_net) -> np.ndarray:
    """Per-hour shift requests for the next ``T`` hours.

    ``past_net`` holds up to T most recent actual cluster net loads (oldest
    first) and ``forecast_net`` the T+1 forecasts starting at the current
    hour. The two are concatenated and extended past the forecast horizon by
    repeating the last forecast, so the filter window stays full while
    sliding forward. Short histories (start of an epoch) are padded on the
    left with the earliest known value.
    """
    t = policy.horizon
    past = np.asarray(past_net, dtype=float)
    fc = np.asarray(forecast_net, dtype=float)
    if fc.shape != (t + 1,):
        raise ValueError(f"need {t + 1} forecast values, got {fc.shape}")
    if past.ndim != 1 or past.size > t:
        raise ValueError(f"history must be 1-d with at most {t} values")
    if past.size < t:
        fill = past[0] if past.size else fc[0]
        past = np.concatenate([np.full(t - past.size, fill), past])
    ext = np.concatenate([past, fc, np.full(t - 1, fc[-1])])
    shifts = np.empty(t)
    for l in range(t):
        shifts[l] = policy.omega @ ext[l : l + 2 * t + 1] - ext[t + l]
    return shifts


def apportion(shift: np.ndarray, shares: np.ndarray) -> np.ndarray:
    """Split a cluster shift vector across buildings, one row per building."""
    shift = np.asarray(shift, dtype=float)
    shares = np.asarray(shares, dtype=float)
    if shift.ndim != 1 or shares.ndim != 1:
        raise ValueError("shift and shares must be 1-d")
    return np.outer(shares, shift)


def nes_step(theta, epsilons, returns, alpha, sigma):
    """One evolution-strategies update from a batch of perturbation returns.

    Returns are standardized within the batch (mean removed, scaled by the
    population spread) before weighting the perturbations, which keeps the
    estimator invariant to a constant offset in the return signal. Returns
    the new parameter vector together with that spread. A spread below
    ``SIGMA_R_FLOOR`` means the batch carried no ranking signal, so the
    parameters are left untouched.
    """
    theta = np.asarray(theta, dtype=float)
    eps = np.asarray(epsilons, dtype=float)
    rets = np.asarray(returns, dtype=float)
    if eps.shape != (rets.size, theta.size):
        raise ValueError("perturbation batch does not match parameter size")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sigma_r = float(np.std(rets))
    if sigma_r < SIGMA_R_FLOOR:
        return theta.copy(), sigma_r
    grad = (rets - rets.mean()) @ eps
    return theta + alpha / (rets.size * sigma_r) * grad, sigma_r


@dataclass
class NesOptimizer:
    """Batched gradient-free optimizer over a flat parameter vector.

    Call :meth:`propose` to get a perturbed candidate, evaluate it, then
    feed the scalar return to :meth:`record`. Every ``pop_size`` pairs the
    accumulated batch is folded into ``theta``.
    """

    theta: np.ndarray
    alpha: float = 0.01
    sigma: float = 0.01
    pop_size: int = 4
    updates_applied: int = 0
    skipped_batches: int = 0
    trace: list = field(default_factory=list, repr=False)
    _eps: list = field(default_factory=list, repr=False)
    _returns: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.pop_size < 2:
            raise ValueError("pop_size must be at least 2")

    @property
    def pending(self) -> int:
        return len(self._returns)

    def propose(self, rng: np.random.Generator) -> np.ndarray:
        if len(self._eps) > len(self._returns):
            raise RuntimeError("previous candidate has not been scored yet")
        eps = rng.standard_normal(self.theta.size)
        self._eps.append(eps)
        return self.theta + self.sigma * eps

    def record(self, value: float) -> bool:
        """Store one return. Returns True when this completed an update."""
        if len(self._eps) == len(self._returns):
            raise RuntimeError("record() called without a pending candidate")
        self._returns.append(float(value))
        if len(self._returns) < self.pop_size:
            return False
        new_theta, sigma_r = nes_step(
            self.theta, self._eps, self._returns, self.alpha, self.sigma
        )
        applied = sigma_r >= SIGMA_R_FLOOR
        if applied:
            self.updates_applied += 1
        else:
            self.skipped_batches += 1
        self.trace.append(
            {
                "batch": self.updates_applied + self.skipped_batches,
                "applied": applied,
                "sigma_r": sigma_r,
                "step_norm": float(np.linalg.norm(new_theta - self.theta)),
                "returns": list(self._returns),
            }
        )
        self.theta = new_theta
        self._eps.clear()
        self._returns.clear()
        return True

    def state_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "alpha": self.alpha,
            "sigma": self.sigma,
            "pop_size": self.pop_size,
            "updates_applied": self.updates_applied,
            "skipped_batches": self.skipped_batches,
            "trace": [dict(row) for row in self.trace],
            "eps": [e.tolist() for e in self._eps],
            "returns": list(self._returns),
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "NesOptimizer":
        opt = cls(
            np.array(d["theta"]),
            alpha=d["alpha"],
            sigma=d["sigma"],
            pop_size=d["pop_size"],
            updates_applied=d["updates_applied"],
            skipped_batches=d["skipped_batches"],
        )
        opt.trace = [dict(row) for row in d.get("trace", [])]
        opt._eps = [np.array(e) for e in d["eps"]]
        opt._returns = list(d["returns"])
        return opt
