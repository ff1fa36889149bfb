"""Tracking QP: splitting solver vs active-set oracle vs first principles."""

import json

import numpy as np
import pytest

from flexcluster.qpsolver import (
    AdmmSettings,
    DeviceBlock,
    TrackingProblem,
    device_block_from_battery,
    dump_problem,
    kkt_residuals,
    random_tracking_problem,
    solve_tracking_active_set,
    solve_tracking_admm,
    stacked_qp_data,
)
from flexcluster.vbattery import VirtualBattery


def single_device_problem(target, cop=2.5, lo=-50.0, hi=50.0, slo=-1e4, shi=1e4):
    t = len(target)
    dev = DeviceBlock(
        inv_cop=np.full(t, 1.0 / cop),
        u_lo=np.full(t, lo),
        u_hi=np.full(t, hi),
        state_map=np.tril(np.ones((t, t))),
        state_lo=np.full(t, slo),
        state_hi=np.full(t, shi),
    )
    return TrackingProblem(target=np.asarray(target, dtype=float), devices=[dev])


class TestProblemAssembly:
    def test_objective_definition(self):
        prob = single_device_problem([1.0, -2.0], cop=2.0)
        x = np.array([1.0, 1.0])
        # residual = x/2 - target = (0.5-1, 0.5+2) = (-0.5, 2.5)
        assert prob.objective(x) == pytest.approx(0.25 + 6.25, abs=1e-12)

    def test_stacked_shapes_two_devices(self):
        rng = np.random.default_rng(0)
        prob = random_tracking_problem(rng, t_max=4, d_max=2)
        while len(prob.devices) != 2:
            prob = random_tracking_problem(rng, t_max=4, d_max=2)
        t, n = prob.horizon, prob.n_vars
        p, q, s, l, u = stacked_qp_data(prob)
        assert p.shape == (n, n) and q.shape == (n,)
        assert s.shape == (n + 2 * t, n)
        assert l.shape == u.shape == (n + 2 * t,)
        assert np.all(l <= u)

    def test_block_from_battery_folds_initial_state(self):
        vb = VirtualBattery(
            decay=0.9,
            charge_gain=1.0,
            cop=np.full(2, 3.0),
            rated_power_kw=2.0,
            baseline_draw_kwh=np.full(2, 0.5),
            soc=4.0,
            soc_min=0.0,
            soc_max=10.0,
        )
        blk = device_block_from_battery(vb)
        # Free trajectory is (3.6, 3.24); the state box shifts accordingly.
        assert np.allclose(blk.state_hi, [10.0 - 3.6, 10.0 - 3.24])
        assert np.allclose(blk.state_lo, [-3.6, -3.24])


class TestKnownSolutions:
    def test_unconstrained_single_step(self):
        # +1 kWh electric through a cop-2.5 device: 2.5 kWh thermal, exact fit.
        prob = single_device_problem([1.0])
        for sol in (solve_tracking_admm(prob), solve_tracking_active_set(prob)):
            assert sol.optimal
            assert sol.x[0] == pytest.approx(2.5, abs=1e-5)
            assert sol.objective <= 1e-10

    def test_saturated_upper_bound(self):
        prob = single_device_problem([4.0], hi=3.0)
        sol = solve_tracking_admm(prob)
        ora = solve_tracking_active_set(prob)
        assert sol.x[0] == pytest.approx(3.0, abs=1e-6)
        assert ora.x[0] == pytest.approx(3.0, abs=1e-10)
        # residual = 4 - 3/2.5 = 2.8
        assert ora.objective == pytest.approx(2.8**2, abs=1e-9)

    def test_state_cap_limits_total_charge(self):
        # Two steps, unit dynamics, SOC headroom of 1.5 thermal total.
        prob = single_device_problem([2.0, 2.0], cop=1.0, shi=1.5)
        ora = solve_tracking_active_set(prob)
        assert np.cumsum(ora.x)[-1] <= 1.5 + 1e-8
        sol = solve_tracking_admm(prob)
        assert sol.objective == pytest.approx(ora.objective, rel=1e-6, abs=1e-8)

    def test_infeasible_instance_is_certified(self):
        dev = DeviceBlock(
            inv_cop=np.ones(1),
            u_lo=np.array([-1.0]),
            u_hi=np.array([1.0]),
            state_map=np.eye(1),
            state_lo=np.array([5.0]),
            state_hi=np.array([6.0]),
        )
        prob = TrackingProblem(target=np.array([0.0]), devices=[dev])
        sol = solve_tracking_admm(prob)
        assert sol.status == "infeasible"
        ora = solve_tracking_active_set(prob)
        assert ora.status == "infeasible"


class TestOracleAgainstGrid:
    """The oracle itself is validated against dense search on tiny instances."""

    def _grid_best(self, prob, pts=801):
        p, q, s, l, u = stacked_qp_data(prob)
        n = prob.n_vars
        axes = [np.linspace(-20, 20, pts) for _ in range(n)]
        if n == 1:
            cand = axes[0][:, None]
        else:
            g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            cand = np.column_stack([g0.ravel(), g1.ravel()])
        feas = np.all((s @ cand.T).T <= u + 1e-9, axis=1) & np.all(
            (s @ cand.T).T >= l - 1e-9, axis=1
        )
        cand = cand[feas]
        assert cand.size, "grid missed the feasible region"
        m = prob.mix_matrix()
        resid = cand @ m.T - prob.target
        vals = np.sum(resid**2, axis=1)
        return float(np.min(vals))

    def test_oracle_at_most_grid_minimum(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 40:
            prob = random_tracking_problem(rng, t_max=2, d_max=2)
            if prob.n_vars > 2:
                continue
            ora = solve_tracking_active_set(prob)
            assert ora.optimal
            grid = self._grid_best(prob)
            assert ora.objective <= grid + 1e-6
            rep = kkt_residuals(prob, ora.x, ora.y)
            assert rep.passes(1e-7), rep
            checked += 1


class TestSolverAgreement:
    def test_randomized_admm_matches_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(60):
            prob = random_tracking_problem(rng)
            sol = solve_tracking_admm(prob)
            ora = solve_tracking_active_set(prob)
            assert sol.optimal and ora.optimal
            assert sol.objective == pytest.approx(
                ora.objective, rel=1e-6, abs=1e-6
            )
            assert kkt_residuals(prob, sol.x, sol.y).passes(1e-5)
            assert kkt_residuals(prob, ora.x, ora.y).passes(1e-6)

    def test_duals_recoverable_from_primal_alone(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            prob = random_tracking_problem(rng)
            ora = solve_tracking_active_set(prob)
            rep = kkt_residuals(prob, ora.x, y=None)
            assert rep.passes(1e-5), rep

    def test_warm_started_resolve_stays_optimal(self):
        rng = np.random.default_rng(11)
        prob = random_tracking_problem(rng, t_max=6, d_max=2)
        cold = solve_tracking_admm(prob)
        assert cold.optimal
        warm = solve_tracking_admm(prob, warm=(cold.x, cold.y))
        assert warm.optimal
        assert warm.iterations <= cold.iterations
        assert warm.objective == pytest.approx(cold.objective, rel=1e-6, abs=1e-9)

    def test_first_step_extraction(self):
        prob = single_device_problem([1.0, 0.0])
        sol = solve_tracking_admm(prob)
        assert sol.u_first.shape == (1,)
        assert sol.u_first[0] == pytest.approx(sol.x[0])

    def test_optimal_status_implies_small_residuals(self):
        rng = np.random.default_rng(3)
        settings = AdmmSettings()
        for _ in range(10):
            prob = random_tracking_problem(rng)
            sol = solve_tracking_admm(prob, settings)
            assert sol.optimal
            assert sol.primal_residual <= settings.eps_abs
            assert sol.dual_residual <= settings.eps_abs

    def test_joint_scaling_homogeneity(self):
        # Scaling target and every bound by c scales the optimum by c and
        # the objective by c^2.
        rng = np.random.default_rng(17)
        prob = random_tracking_problem(rng, t_max=4, d_max=2)
        c = 3.0
        scaled_devices = []
        for d in prob.devices:
            scaled_devices.append(
                DeviceBlock(
                    inv_cop=d.inv_cop.copy(),
                    u_lo=c * d.u_lo,
                    u_hi=c * d.u_hi,
                    state_map=d.state_map.copy(),
                    state_lo=c * d.state_lo,
                    state_hi=c * d.state_hi,
                )
            )
        scaled = TrackingProblem(target=c * prob.target, devices=scaled_devices)
        base = solve_tracking_active_set(prob)
        big = solve_tracking_active_set(scaled)
        assert big.objective == pytest.approx(c**2 * base.objective, rel=1e-6, abs=1e-8)


class TestProblemDump:
    def test_dump_rebuilds_instance(self, tmp_path):
        rng = np.random.default_rng(29)
        prob = random_tracking_problem(rng, t_max=4, d_max=2)
        sol = solve_tracking_admm(prob)
        path = tmp_path / "failed_qp.json"
        dump_problem(prob, path, sol)
        back = json.loads(path.read_text())

        devices = [
            DeviceBlock(**{k: np.array(v) for k, v in d.items()})
            for d in back["devices"]
        ]
        rebuilt = TrackingProblem(target=np.array(back["target"]), devices=devices)
        p, q, s, lo, hi = stacked_qp_data(rebuilt)
        assert np.array_equal(p, np.array(back["stacked"]["p"]))
        assert np.array_equal(lo, np.array(back["stacked"]["lo"]))

        x = np.array(back["solution"]["x"])
        assert back["solution"]["status"] == sol.status
        assert rebuilt.objective(x) == pytest.approx(prob.objective(sol.x))

    def test_dump_without_solution(self, tmp_path):
        prob = single_device_problem([1.0, -2.0])
        payload = dump_problem(prob, tmp_path / "inst.json")
        assert "solution" not in payload
        assert json.loads((tmp_path / "inst.json").read_text()) == payload
