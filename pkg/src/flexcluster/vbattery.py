"""Linear storage surrogates ("virtual batteries") and horizon condensation.

A thermal storage asset (chilled-water tank, DHW tank, or a thermostatically
controlled load treated as implicit storage) is reduced to a scalar linear
system

    x[t+1] = a * x[t] + delta * u[t]

where ``x`` is the stored-energy state and ``u`` the thermal charging power
(kWh per step, negative for discharge).  The electric side sees ``u / cop``.
Everything the tracking QP needs -- input bounds, the condensed state map and
the stacked state-box constraints -- is built here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VirtualBattery",
    "tcl_virtual_battery",
    "tank_virtual_battery",
    "input_bounds",
    "condense",
    "soc_trajectory",
    "soc_box_constraints",
    "step",
]


@dataclass
class VirtualBattery:
    """Scalar linear storage model over a fixed planning horizon.

    Parameters
    ----------
    decay : float
        State retention factor ``a``, in (0, 1].  ``1 - a`` is the standing
        loss per step.
    charge_gain : float
        Input gain ``delta`` (> 0) mapping thermal charge to stored energy.
    cop : ndarray, shape (T,)
        Conversion factor from electric to thermal power at each step of the
        horizon (heat-pump COP, or heater efficiency for a resistive DHW
        tank).  Strictly positive.
    rated_power_kw : float
        Electric rating of the conversion device, >= 0.
    baseline_draw_kwh : ndarray, shape (T,)
        Thermal demand the device must serve each step regardless of any
        storage action, >= 0.
    soc : float
        Current stored energy, within [soc_min, soc_max].
    soc_min, soc_max : float
        State box.
    """

    decay: float
    charge_gain: float
    cop: np.ndarray
    rated_power_kw: float
    baseline_draw_kwh: np.ndarray
    soc: float
    soc_min: float = 0.0
    soc_max: float = math.inf

    def __post_init__(self) -> None:
        self.cop = np.asarray(self.cop, dtype=float)
        self.baseline_draw_kwh = np.asarray(self.baseline_draw_kwh, dtype=float)
        if self.cop.ndim != 1 or self.baseline_draw_kwh.shape != self.cop.shape:
            raise ValueError("cop and baseline_draw_kwh must be 1-d with equal length")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.charge_gain <= 0.0:
            raise ValueError(f"charge_gain must be positive, got {self.charge_gain}")
        if np.any(self.cop <= 0.0):
            raise ValueError("cop must be strictly positive")
        if self.rated_power_kw < 0.0:
            raise ValueError(f"rated_power_kw must be >= 0, got {self.rated_power_kw}")
        if np.any(self.baseline_draw_kwh < 0.0):
            raise ValueError("baseline_draw_kwh must be >= 0")
        if not self.soc_min <= self.soc <= self.soc_max:
            raise ValueError(
                f"soc {self.soc} outside [{self.soc_min}, {self.soc_max}]"
            )

    @property
    def horizon(self) -> int:
        return self.cop.shape[0]


def tcl_virtual_battery(
    r_thermal: float, c_thermal: float, dt_hours: float, cop: float
) -> tuple[float, float, float]:
    """Discretize a first-order thermostatic load into virtual-battery form.

    For thermal resistance ``R`` (degC/kW) and capacitance ``C`` (kWh/degC)
    sampled every ``dt_hours``:

        decay        a     = exp(-dt / (R C))
        ambient_gain b     = cop * R          (degC steady-state per kW drawn)
        charge_gain  delta = (1 - a) * R C

    Returns (decay, ambient_gain, charge_gain).
    """
    if r_thermal <= 0 or c_thermal <= 0 or dt_hours <= 0 or cop <= 0:
        raise ValueError("r_thermal, c_thermal, dt_hours and cop must be positive")
    a = math.exp(-dt_hours / (r_thermal * c_thermal))
    b = cop * r_thermal
    delta = (1.0 - a) * r_thermal * c_thermal
    return a, b, delta


def tank_virtual_battery(loss_coeff: float) -> tuple[float, float]:
    """Virtual-battery parameters for a sensible storage tank.

    A tank losing the fraction ``loss_coeff`` of its content per step has
    decay ``1 - loss_coeff`` and unit charge gain.  Returns (decay,
    charge_gain).
    """
    if not 0.0 <= loss_coeff < 1.0:
        raise ValueError(f"loss_coeff must lie in [0, 1), got {loss_coeff}")
    return 1.0 - loss_coeff, 1.0


def input_bounds(
    vb: VirtualBattery,
    max_charge_kwh: float | None = None,
    max_discharge_kwh: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step thermal input box for the storage action.

    The device must still serve its baseline draw, so the charging headroom
    at step t is ``cop[t] * rated_power_kw - baseline_draw_kwh[t]`` and the
    discharge floor is ``-baseline_draw_kwh[t]`` (storage can at most
    displace the baseline, never push heat back through the device).
    Optional symmetric-rate limits of the tank tighten the box further.

    Returns (lo, hi), each shape (T,).  Raises ValueError if the box is
    empty at any step.
    """
    lo = -vb.baseline_draw_kwh.copy()
    hi = vb.cop * vb.rated_power_kw - vb.baseline_draw_kwh
    if max_discharge_kwh is not None:
        if max_discharge_kwh < 0:
            raise ValueError("max_discharge_kwh must be >= 0")
        lo = np.maximum(lo, -max_discharge_kwh)
    if max_charge_kwh is not None:
        if max_charge_kwh < 0:
            raise ValueError("max_charge_kwh must be >= 0")
        hi = np.minimum(hi, max_charge_kwh)
    if np.any(lo > hi + 1e-12):
        bad = int(np.argmax(lo > hi + 1e-12))
        raise ValueError(
            f"empty input box at step {bad}: lo={lo[bad]:.6g} > hi={hi[bad]:.6g}"
        )
    return lo, np.maximum(hi, lo)


@dataclass
class CondensedDynamics:
    """Stacked form of the scalar recursion over a horizon.

    With X = (x[1], ..., x[T]) and U = (u[0], ..., u[T-1]) the dynamics read
    ``A X = B U + C`` where A has 1 on the diagonal and ``-a`` on the first
    subdiagonal, ``B = delta * I``, and ``C = (a * x0, 0, ..., 0)``.  The
    inverse ``lam = A^{-1}`` is lower triangular with entries ``a**(i-j)``,
    so ``X = lam @ (B U + C)`` in closed form.
    """

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    c_vector: np.ndarray
    lam: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.c_vector.shape[0]

    def propagate(self, u: np.ndarray) -> np.ndarray:
        """State trajectory x[1..T] for the input sequence ``u``."""
        u = np.asarray(u, dtype=float)
        return self.lam @ (self.b_matrix @ u + self.c_vector)


def condense(vb: VirtualBattery, horizon: int | None = None) -> CondensedDynamics:
    """Build the stacked dynamics ``A X = B U + C`` and its closed-form inverse."""
    t = vb.horizon if horizon is None else int(horizon)
    if t < 1:
        raise ValueError(f"horizon must be >= 1, got {t}")
    a = vb.decay
    a_matrix = np.eye(t)
    idx = np.arange(t - 1)
    a_matrix[idx + 1, idx] = -a
    b_matrix = vb.charge_gain * np.eye(t)
    c_vector = np.zeros(t)
    c_vector[0] = a * vb.soc
    # lam[i, j] = a**(i-j) for i >= j, zero above the diagonal.
    i = np.arange(t)
    expo = i[:, None] - i[None, :]
    lam = np.where(expo >= 0, a ** np.maximum(expo, 0), 0.0)
    return CondensedDynamics(a_matrix, b_matrix, c_vector, lam)


def soc_trajectory(vb: VirtualBattery, u: np.ndarray) -> np.ndarray:
    """Closed-form state trajectory over ``len(u)`` steps via condensation."""
    u = np.asarray(u, dtype=float)
    return condense(vb, u.shape[0]).propagate(u)


def soc_box_constraints(
    vb: VirtualBattery, horizon: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """State box as stacked linear input constraints ``G u <= h``.

    Substituting X = lam (B U + C) into x_min <= X <= x_max gives

        [ lam B; -lam B ] U <= [ x_max - lam C; lam C - x_min ]
    """
    cd = condense(vb, horizon)
    lam_b = cd.lam @ cd.b_matrix
    lam_c = cd.lam @ cd.c_vector
    g = np.vstack([lam_b, -lam_b])
    h = np.concatenate([vb.soc_max - lam_c, lam_c - vb.soc_min])
    return g, h


def step(vb: VirtualBattery, u: float) -> float:
    """One application of the scalar recursion; returns the next SOC."""
    return vb.decay * vb.soc + vb.charge_gain * float(u)
