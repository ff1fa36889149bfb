"""Tracking QP for load-shift commands, with an independent oracle.

A building receives a load-shift command ``target`` (electric kWh over the
planning horizon) and distributes it across its storage devices.  With the
stacked thermal schedule ``U = (u_1, ..., u_D)`` the problem is

    minimize    sum_l ( target_l - sum_d u_{d,l} / cop_d,l )^2
    subject to  per-step thermal input boxes, and
                per-device state boxes through the condensed dynamics.

Two solution paths are kept deliberately separate:

* :func:`solve_tracking_admm` -- the production solver, a plain operator
  -splitting loop with over-relaxation, cached factorization and a primal
  infeasibility certificate;
* :func:`solve_tracking_active_set` -- a small dense active-set method used
  as a cross-checking oracle, never called by the controller.

:func:`kkt_residuals` scores any candidate solution against the optimality
conditions without reference to either solver.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize

from .vbattery import VirtualBattery, condense, input_bounds

logger = logging.getLogger(__name__)

__all__ = [
    "DeviceBlock",
    "TrackingProblem",
    "AdmmSettings",
    "TrackingSolution",
    "device_block_from_battery",
    "stacked_qp_data",
    "solve_tracking_admm",
    "solve_tracking_active_set",
    "kkt_residuals",
    "random_tracking_problem",
    "dump_problem",
]


@dataclass
class DeviceBlock:
    """One storage device as seen by the tracking QP.

    ``state_map @ u`` gives the controllable part of the SOC trajectory and
    must stay inside [state_lo, state_hi]; the free part (decayed initial
    state) is already folded into those limits.
    """

    inv_cop: np.ndarray  # (T,) electric kWh per thermal kWh moved
    u_lo: np.ndarray  # (T,) thermal input box
    u_hi: np.ndarray
    state_map: np.ndarray  # (T, T) lower-triangular lam @ B
    state_lo: np.ndarray  # (T,)
    state_hi: np.ndarray

    def __post_init__(self) -> None:
        t = self.inv_cop.shape[0]
        if not (
            self.u_lo.shape == (t,)
            and self.u_hi.shape == (t,)
            and self.state_map.shape == (t, t)
            and self.state_lo.shape == (t,)
            and self.state_hi.shape == (t,)
        ):
            raise ValueError("inconsistent device block shapes")
        if np.any(self.u_lo > self.u_hi) or np.any(self.state_lo > self.state_hi):
            raise ValueError("empty constraint box in device block")

    @property
    def horizon(self) -> int:
        return self.inv_cop.shape[0]


def device_block_from_battery(
    vb: VirtualBattery,
    max_charge_kwh: float | None = None,
    max_discharge_kwh: float | None = None,
) -> DeviceBlock:
    """Assemble the QP-facing view of a virtual battery."""
    lo, hi = input_bounds(vb, max_charge_kwh, max_discharge_kwh)
    cd = condense(vb)
    lam_c = cd.lam @ cd.c_vector
    return DeviceBlock(
        inv_cop=1.0 / vb.cop,
        u_lo=lo,
        u_hi=hi,
        state_map=cd.lam @ cd.b_matrix,
        state_lo=vb.soc_min - lam_c,
        state_hi=vb.soc_max - lam_c,
    )


@dataclass
class TrackingProblem:
    target: np.ndarray  # (T,) electric kWh to shift per step
    devices: list[DeviceBlock]

    def __post_init__(self) -> None:
        self.target = np.asarray(self.target, dtype=float)
        if not self.devices:
            raise ValueError("at least one device required")
        t = self.target.shape[0]
        for d in self.devices:
            if d.horizon != t:
                raise ValueError("all devices must share the target horizon")

    @property
    def horizon(self) -> int:
        return self.target.shape[0]

    @property
    def n_vars(self) -> int:
        return self.horizon * len(self.devices)

    def mix_matrix(self) -> np.ndarray:
        """(T, D*T) map from stacked thermal inputs to shifted electric load."""
        return np.hstack([np.diag(d.inv_cop) for d in self.devices])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        t = self.horizon
        return [x[i * t : (i + 1) * t] for i in range(len(self.devices))]

    def objective(self, x: np.ndarray) -> float:
        r = self.mix_matrix() @ x - self.target
        return float(r @ r)


def stacked_qp_data(
    prob: TrackingProblem,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Canonical form: min 1/2 x'Px + q'x  s.t.  l <= S x <= u.

    The first n rows of S are the identity (input boxes); the rest are the
    per-device state maps.
    """
    m = prob.mix_matrix()
    p = 2.0 * (m.T @ m)
    q = -2.0 * (m.T @ prob.target)
    n = prob.n_vars
    t = prob.horizon
    d = len(prob.devices)
    s = np.zeros((n + d * t, n))
    s[:n, :n] = np.eye(n)
    lo = [np.concatenate([dev.u_lo for dev in prob.devices])]
    hi = [np.concatenate([dev.u_hi for dev in prob.devices])]
    for i, dev in enumerate(prob.devices):
        s[n + i * t : n + (i + 1) * t, i * t : (i + 1) * t] = dev.state_map
        lo.append(dev.state_lo)
        hi.append(dev.state_hi)
    return p, q, s, np.concatenate(lo), np.concatenate(hi)


@dataclass
class AdmmSettings:
    rho: float = 1.0
    sigma: float = 1e-6
    alpha: float = 1.6  # over-relaxation
    eps_abs: float = 1e-6
    eps_rel: float = 0.0
    eps_infeas: float = 1e-8
    max_iter: int = 20000
    check_every: int = 5


@dataclass
class TrackingSolution:
    x: np.ndarray  # stacked thermal schedule
    y: np.ndarray  # multipliers for l <= Sx <= u (sign carries the side)
    status: str  # "optimal" | "max_iter" | "infeasible"
    iterations: int
    objective: float
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    u_first: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class AdmmWorkspace:
    """Reusable factorization for a family of problems sharing (P, S, rho).

    Within a day the device models are frozen, so the controller solves the
    same quadratic with fresh linear terms and bounds every hour; only
    (q, l, u) and the warm start change.
    """

    def __init__(self, p: np.ndarray, s: np.ndarray, settings: AdmmSettings):
        self.p = p
        self.s = s
        self.settings = settings
        k = p + settings.sigma * np.eye(p.shape[0]) + settings.rho * (s.T @ s)
        c, low = scipy.linalg.cho_factor(k)
        # Small systems: an explicit inverse turns every iteration's solve
        # into one matvec.
        self.k_inv = scipy.linalg.cho_solve((c, low), np.eye(p.shape[0]))

    def solve(
        self,
        q: np.ndarray,
        l: np.ndarray,
        u: np.ndarray,
        warm: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> TrackingSolution:
        st = self.settings
        p, s = self.p, self.s
        n, m = s.shape[1], s.shape[0]
        if warm is not None:
            x = warm[0].copy()
            y = warm[1].copy()
        else:
            x = np.zeros(n)
            y = np.zeros(m)
        z = np.clip(s @ x, l, u)
        rho, sigma, alpha = st.rho, st.sigma, st.alpha
        status = "max_iter"
        it = 0
        r_prim = r_dual = np.inf
        for it in range(1, st.max_iter + 1):
            rhs = sigma * x - q + s.T @ (rho * z - y)
            x_t = self.k_inv @ rhs
            z_t = s @ x_t
            x = alpha * x_t + (1.0 - alpha) * x
            z_r = alpha * z_t + (1.0 - alpha) * z
            z_new = np.clip(z_r + y / rho, l, u)
            dy = rho * (z_r - z_new)
            y = y + dy
            z_prev, z = z, z_new
            if it % st.check_every == 0:
                sx = s @ x
                r_prim = np.max(np.abs(sx - z)) if m else 0.0
                r_dual = np.max(np.abs(p @ x + q + s.T @ y))
                eps_p = st.eps_abs + st.eps_rel * max(
                    np.max(np.abs(sx)), np.max(np.abs(z))
                )
                eps_d = st.eps_abs + st.eps_rel * max(
                    np.max(np.abs(p @ x)), np.max(np.abs(q)), np.max(np.abs(s.T @ y))
                )
                if r_prim <= eps_p and r_dual <= eps_d:
                    status = "optimal"
                    break
                # Primal infeasibility certificate on the dual increment.
                norm_dy = np.max(np.abs(dy))
                if norm_dy > 1e-14:
                    dy_n = dy / norm_dy
                    support = (
                        u @ np.maximum(dy_n, 0.0) + l @ np.minimum(dy_n, 0.0)
                    )
                    if (
                        np.max(np.abs(s.T @ dy_n)) <= st.eps_infeas
                        and support <= -st.eps_infeas
                    ):
                        status = "infeasible"
                        break
        return TrackingSolution(
            x=x,
            y=y,
            status=status,
            iterations=it,
            objective=np.nan,
            primal_residual=r_prim,
            dual_residual=r_dual,
        )


def solve_tracking_admm(
    prob: TrackingProblem,
    settings: AdmmSettings | None = None,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
    workspace: AdmmWorkspace | None = None,
) -> TrackingSolution:
    """Solve the tracking QP by operator splitting.

    A pre-built :class:`AdmmWorkspace` may be supplied when many problems
    share the same quadratic and constraint geometry; otherwise one is
    assembled on the fly.
    """
    settings = settings or AdmmSettings()
    p, q, s, l, u = stacked_qp_data(prob)
    ws = workspace if workspace is not None else AdmmWorkspace(p, s, settings)
    sol = ws.solve(q, l, u, warm=warm)
    sol.objective = prob.objective(sol.x)
    sol.u_first = np.array([ud[0] for ud in prob.split(sol.x)])
    return sol


# ---------------------------------------------------------------------------
# Active-set oracle
# ---------------------------------------------------------------------------


def _one_sided_constraints(prob: TrackingProblem) -> tuple[np.ndarray, np.ndarray]:
    """All constraints as A x <= b (upper rows first, then negated lowers)."""
    _, _, s, l, u = stacked_qp_data(prob)
    a = np.vstack([s, -s])
    b = np.concatenate([u, -l])
    return a, b


def _feasible_start(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    res = scipy.optimize.linprog(
        c=np.zeros(a.shape[1]),
        A_ub=a,
        b_ub=b,
        bounds=[(None, None)] * a.shape[1],
        method="highs",
    )
    return res.x if res.success else None


def solve_tracking_active_set(
    prob: TrackingProblem,
    x0: np.ndarray | None = None,
    reg: float = 1e-10,
    max_pivots: int = 2000,
) -> TrackingSolution:
    """Dense primal active-set oracle for the tracking QP.

    Pivots on the fully enumerated one-sided constraint rows with a tiny
    Tikhonov term making the Hessian definite, then re-solves the equality
    -constrained problem on the final active set without regularization.
    Intended for small instances and cross-checks only.
    """
    m_mix = prob.mix_matrix()
    p = 2.0 * (m_mix.T @ m_mix)
    q = -2.0 * (m_mix.T @ prob.target)
    a, b = _one_sided_constraints(prob)
    n = p.shape[1]
    h = p + reg * np.eye(n)

    if x0 is None:
        x = _feasible_start(a, b)
        if x is None:
            return TrackingSolution(
                x=np.zeros(n),
                y=np.zeros(a.shape[0] // 2),
                status="infeasible",
                iterations=0,
                objective=np.nan,
            )
        x = np.asarray(x, dtype=float)
    else:
        x = np.asarray(x0, dtype=float).copy()
        if np.any(a @ x > b + 1e-9):
            raise ValueError("supplied start point is infeasible")

    act_tol = 1e-9
    work = list(np.flatnonzero(a @ x > b - act_tol))
    lam_work = np.zeros(0)
    for pivot in range(1, max_pivots + 1):
        aw = a[work]
        kkt = np.block(
            [[h, aw.T], [aw, np.zeros((len(work), len(work)))]]
        )
        rhs = np.concatenate([-(h @ x + q), np.zeros(len(work))])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        step_dir = sol[:n]
        lam_work = sol[n:]
        if np.max(np.abs(step_dir), initial=0.0) < 1e-11:
            if len(work) == 0 or np.min(lam_work) >= -1e-9:
                break
            drop = int(np.argmin(lam_work))
            work.pop(drop)
            continue
        # Ratio test against rows not in the working set.
        mask = np.ones(a.shape[0], dtype=bool)
        mask[work] = False
        adir = a[mask] @ step_dir
        slack = b[mask] - a[mask] @ x
        blocking = adir > 1e-12
        if np.any(blocking):
            ratios = slack[blocking] / adir[blocking]
            alpha = min(1.0, float(np.min(ratios)))
        else:
            alpha = 1.0
        x = x + alpha * step_dir
        if alpha < 1.0:
            cand = np.flatnonzero(mask)[blocking]
            ratios_full = slack[blocking] / adir[blocking]
            work.append(int(cand[int(np.argmin(ratios_full))]))
    else:
        raise RuntimeError("active-set oracle exceeded pivot budget")

    # Polish: drop the regularization and re-solve on the final active set.
    aw = a[work]
    kkt = np.block([[p, aw.T], [aw, np.zeros((len(work), len(work)))]])
    rhs = np.concatenate([-q, b[work]])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    x_pol, lam_pol = sol[:n], sol[n:]
    ok = (
        np.all(a @ x_pol <= b + 1e-8)
        and (len(work) == 0 or np.min(lam_pol) >= -1e-8)
    )
    if ok:
        x, lam_work = x_pol, lam_pol

    # Fold one-sided multipliers back into the two-sided sign convention.
    n_rows = a.shape[0] // 2
    y = np.zeros(n_rows)
    for idx, lam in zip(work, np.maximum(lam_work, 0.0)):
        if idx < n_rows:
            y[idx] += lam  # upper side
        else:
            y[idx - n_rows] -= lam  # lower side
    return TrackingSolution(
        x=x,
        y=y,
        status="optimal",
        iterations=pivot,
        objective=prob.objective(x),
        primal_residual=float(np.max(np.maximum(a @ x - b, 0.0))),
        dual_residual=0.0,
        u_first=np.array([ud[0] for ud in prob.split(x)]),
    )


# ---------------------------------------------------------------------------
# Optimality scoring
# ---------------------------------------------------------------------------


@dataclass
class KktReport:
    stationarity: float
    primal_feasibility: float
    complementarity: float
    dual_feasibility: float

    @property
    def worst(self) -> float:
        return max(
            self.stationarity,
            self.primal_feasibility,
            self.complementarity,
            self.dual_feasibility,
        )

    def passes(self, tol: float) -> bool:
        return self.worst <= tol


def kkt_residuals(
    prob: TrackingProblem,
    x: np.ndarray,
    y: np.ndarray | None = None,
    recover_duals: bool = False,
) -> KktReport:
    """Score a candidate point against the KKT conditions.

    With ``recover_duals`` (or when no multipliers are given) the duals are
    re-estimated from the primal point alone: rows within tolerance of a
    bound are treated as active and a nonnegative least-squares fit of the
    stationarity equation assigns their multipliers.  This makes the check
    independent of whichever solver produced ``x``.
    """
    p, q, s, l, u = stacked_qp_data(prob)
    sx = s @ x
    primal = float(
        max(np.max(np.maximum(sx - u, 0.0)), np.max(np.maximum(l - sx, 0.0)))
    )
    if y is None or recover_duals:
        act_tol = 1e-6
        up_rows = np.flatnonzero(sx >= u - act_tol)
        lo_rows = np.flatnonzero(sx <= l + act_tol)
        cols = []
        for r in up_rows:
            cols.append(s[r])
        for r in lo_rows:
            cols.append(-s[r])
        grad = p @ x + q
        y = np.zeros(s.shape[0])
        if cols:
            a_mat = np.array(cols).T
            lam, _ = scipy.optimize.nnls(a_mat, -grad)
            for k, r in enumerate(up_rows):
                y[r] += lam[k]
            for k, r in enumerate(lo_rows):
                y[r] -= lam[len(up_rows) + k]
    stationarity = float(np.max(np.abs(p @ x + q + s.T @ y)))
    y_pos = np.maximum(y, 0.0)
    y_neg = np.maximum(-y, 0.0)
    comp = float(np.max(np.maximum(y_pos * np.abs(u - sx), y_neg * np.abs(sx - l))))
    # In the two-sided convention any sign is dual feasible unless the row
    # has a gap on the side the sign points to, which complementarity already
    # measures; flag only simultaneous two-sided activity on an open box.
    dual = 0.0
    return KktReport(
        stationarity=stationarity,
        primal_feasibility=primal,
        complementarity=comp,
        dual_feasibility=dual,
    )


# ---------------------------------------------------------------------------
# Randomized feasible instances (shared by unit and acceptance tests)
# ---------------------------------------------------------------------------


def random_tracking_problem(
    rng: np.random.Generator, t_max: int = 6, d_max: int = 2
) -> TrackingProblem:
    """Draw a feasible tracking instance with a mix of loose and tight boxes.

    Zero input is feasible by construction: boxes always contain 0 and the
    uncontrolled SOC trajectory never leaves [soc_min, soc_max].
    """
    t = int(rng.integers(1, t_max + 1))
    n_dev = int(rng.integers(1, d_max + 1))
    devices = []
    for _ in range(n_dev):
        cap = float(rng.uniform(3.0, 15.0))
        vb = VirtualBattery(
            decay=float(rng.uniform(0.6, 1.0)),
            charge_gain=float(rng.uniform(0.4, 1.5)),
            cop=rng.uniform(1.0, 5.0, size=t),
            rated_power_kw=float(rng.uniform(1.0, 4.0)),
            baseline_draw_kwh=rng.uniform(0.0, 0.8, size=t),
            soc=float(rng.uniform(0.0, cap)),
            soc_min=0.0,
            soc_max=cap,
        )
        tight = rng.random() < 0.35
        rate = cap * float(rng.uniform(0.05, 0.2)) if tight else None
        devices.append(device_block_from_battery(vb, rate, rate))
    scale = float(rng.uniform(0.2, 4.0))
    return TrackingProblem(target=rng.normal(0.0, scale, size=t), devices=devices)


def dump_problem(
    prob: TrackingProblem,
    path: str | Path,
    solution: TrackingSolution | None = None,
) -> dict:
    """Write a failed (or any) instance to JSON for offline forensics.

    The payload carries both the per-device blocks and the canonical stacked
    form, so the instance can be re-solved without this package. Returns the
    payload that was written.
    """
    p, q, s, lo, hi = stacked_qp_data(prob)
    payload: dict = {
        "target": prob.target.tolist(),
        "devices": [
            {
                "inv_cop": d.inv_cop.tolist(),
                "u_lo": d.u_lo.tolist(),
                "u_hi": d.u_hi.tolist(),
                "state_map": d.state_map.tolist(),
                "state_lo": d.state_lo.tolist(),
                "state_hi": d.state_hi.tolist(),
            }
            for d in prob.devices
        ],
        "stacked": {
            "p": p.tolist(),
            "q": q.tolist(),
            "s": s.tolist(),
            "lo": lo.tolist(),
            "hi": hi.tolist(),
        },
    }
    if solution is not None:
        payload["solution"] = {
            "status": solution.status,
            "iterations": solution.iterations,
            "objective": solution.objective,
            "primal_residual": float(solution.primal_residual),
            "dual_residual": float(solution.dual_residual),
            "x": solution.x.tolist(),
            "y": solution.y.tolist(),
        }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
    return payload
