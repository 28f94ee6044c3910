"""Benchmark solver checks.

The penalty solver is cross-checked against an independent grid oracle
on a single-chain topology (one device, one BS, one server). There the
problem decomposes: given the two interface volumes (device offload w1,
BS forward y1), every remaining variable solves a tiny convex problem of
its own, so nested grid refinement finds the global optimum without
touching the package's solver or gradient code.
"""

import numpy as np
import pytest

from conftest import make_instance
from edgeoco._kernels import cost_batch, stack_envs
from edgeoco.environment import EnvConfig, env_sequence
from edgeoco.model import ActionSpace, BoxBounds, CostParams
from edgeoco.oracle import (
    SolveReport,
    dynamic_objectives,
    dynamic_solutions_array,
    path_length,
    solve_dynamic,
    solve_static,
)
from edgeoco.topology import build_topology

# --- independent scalar math for the grid oracle ---------------------------


def _si(u, d):
    return 1.0 / u if u >= d else 1.0 / d + (d - u) / d**2


def _rate(p, g):
    return np.log2(1.0 + g * p)


def _zoom1d(f, lo, hi, rounds=8, pts=21):
    """Global min of a unimodal function on [lo, hi] by grid refinement."""
    if hi < lo:
        return np.inf
    if hi == lo:
        return f(lo)
    best = np.inf
    for _ in range(rounds):
        xs = np.linspace(lo, hi, pts)
        vals = [f(x) for x in xs]
        i = int(np.argmin(vals))
        best = min(best, vals[i])
        pitch = (hi - lo) / (pts - 1)
        lo, hi = max(lo, xs[i] - 2 * pitch), min(hi, xs[i] + 2 * pitch)
        if hi - lo < 1e-12:
            break
    return best


def _chain_instance(horizon, seed=21):
    top = build_topology(1, 1, 1)
    bounds = BoxBounds(w_local=2.0, w_offload=6.0, p_tx=6.0,
                       y_cloud=8.0, y_offload=6.0, q_tx=6.0,
                       z_cloud=8.0, z_local=4.0, z_wired=3.0)
    space = ActionSpace(top, bounds)
    params = CostParams.from_space(space)
    cfg = EnvConfig(seed=seed, demand_range=(1.0, 4.0))
    envs = env_sequence(cfg, top, horizon)
    return space, params, envs


def grid_optimum(space, params, envs):
    """Global optimum of the static problem on the 1-1-1 chain."""
    b = space.bounds
    T = len(envs)
    demand = np.array([e.demand[0] for e in envs])
    gdev = np.array([e.gain_dev[0, 0] for e in envs])
    gbs = np.array([e.gain_bs[0, 0] for e in envs])
    dly_b = np.array([e.cloud_delay_bs[0] for e in envs])
    dly_s = np.array([e.cloud_delay_srv[0] for e in envs])
    rmax = float(demand.max())

    def dev_cost(w1):
        w0 = max(0.0, rmax - w1)
        if w0 > b.w_local + 1e-12:
            return np.inf
        proc = T * _si(params.cap_device - w0, params.delta_device)
        pmin = (2.0 ** w1 - 1.0) / gdev.min()  # rate feasible in every slot
        if pmin > b.p_tx + 1e-12:
            return np.inf

        def pc(p):
            return sum(_si(_rate(p, g) - w1, params.delta_queue) for g in gdev) \
                + T * 0.5 * p * p

        return proc + _zoom1d(pc, min(pmin, b.p_tx), b.p_tx)

    def bs_forward_cost(y1):
        qmin = (2.0 ** y1 - 1.0) / gbs.min()
        if qmin > b.q_tx + 1e-12:
            return np.inf

        def qc(q):
            return sum(_si(_rate(q, g) - y1, params.delta_queue) for g in gbs) \
                + T * 0.5 * q * q

        return _zoom1d(qc, min(qmin, b.q_tx), b.q_tx)

    def srv_cost(y1):
        def zc(z11):
            z0 = max(0.0, y1 - z11)
            if z0 > b.z_cloud + 1e-12:
                return np.inf
            return float(dly_s.sum()) * z0 \
                + T * _si(params.cap_server - z11, params.delta_server)

        return _zoom1d(zc, 0.0, b.z_local)

    w_lo, w_hi = max(0.0, rmax - b.w_local), b.w_offload
    y_lo, y_hi = 0.0, b.y_offload
    best = np.inf
    for _ in range(6):
        w_grid = np.linspace(w_lo, w_hi, 21)
        y_grid = np.linspace(y_lo, y_hi, 21)
        dev = [dev_cost(w) for w in w_grid]
        fwd = [bs_forward_cost(y) for y in y_grid]
        srv = [srv_cost(y) for y in y_grid]
        table = np.full((21, 21), np.inf)
        for i, w1 in enumerate(w_grid):
            if not np.isfinite(dev[i]):
                continue
            for j, y1 in enumerate(y_grid):
                y0 = max(0.0, w1 - y1)
                if y0 > b.y_cloud + 1e-12:
                    continue
                table[i, j] = dev[i] + float(dly_b.sum()) * y0 + fwd[j] + srv[j]
        i, j = np.unravel_index(np.argmin(table), table.shape)
        best = min(best, float(table[i, j]))
        wp = (w_hi - w_lo) / 20.0
        yp = (y_hi - y_lo) / 20.0
        w_lo, w_hi = max(w_lo, w_grid[i] - 2 * wp), min(w_hi, w_grid[i] + 2 * wp)
        y_lo, y_hi = max(y_lo, y_grid[j] - 2 * yp), min(y_hi, y_grid[j] + 2 * yp)
    return best


# --- tests ------------------------------------------------------------------


def test_static_solver_matches_grid_oracle():
    space, params, envs = _chain_instance(horizon=5)
    rep = solve_static(space, params, envs)
    assert rep.converged
    assert rep.max_violation <= 1e-6
    ref = grid_optimum(space, params, envs)
    assert abs(rep.objective - ref) <= 1e-3 * max(1.0, abs(ref))


def test_dynamic_solver_matches_grid_oracle_per_slot():
    space, params, envs = _chain_instance(horizon=3, seed=4)
    reps = solve_dynamic(space, params, envs)
    for env, rep in zip(envs, reps):
        assert rep.converged and rep.max_violation <= 1e-6
        ref = grid_optimum(space, params, [env])
        assert abs(rep.objective - ref) <= 1e-3 * max(1.0, abs(ref))


def test_solver_solution_stays_in_box_and_objective_consistent():
    space, params, envs = _chain_instance(horizon=4, seed=9)
    rep = solve_static(space, params, envs)
    assert np.all(rep.solution >= -1e-15)
    assert np.all(rep.solution <= space.upper + 1e-15)
    # reported objective equals the batch cost at the solution
    stack = stack_envs(envs)
    dims = (space.top.D, space.top.B, space.top.S)
    pt = (params.bandwidth, params.cap_device, params.cap_server,
          params.delta_device, params.delta_server, params.delta_queue)
    costs = cost_batch(rep.solution, dims, pt, stack)
    assert abs(rep.objective - float(np.sum(costs))) <= 1e-9 * max(1.0, rep.objective)


def test_static_solve_insensitive_to_start():
    space, params, envs = _chain_instance(horizon=4, seed=13)
    r1 = solve_static(space, params, envs, x0=np.zeros(space.V))
    r2 = solve_static(space, params, envs, x0=space.upper.copy())
    assert r1.converged and r2.converged
    scale = max(1.0, abs(r1.objective))
    assert abs(r1.objective - r2.objective) <= 2e-3 * scale


def test_dynamic_never_worse_than_static_per_slot():
    # the static solution is feasible in every slot, so each per-slot
    # optimum must come in at or below its cost in that slot
    space, params, _, envs = make_instance(horizon=10, seed=5)
    st = solve_static(space, params, envs)
    assert st.converged
    dyn = solve_dynamic(space, params, envs)
    stack = stack_envs(envs)
    dims = (space.top.D, space.top.B, space.top.S)
    pt = (params.bandwidth, params.cap_device, params.cap_server,
          params.delta_device, params.delta_server, params.delta_queue)
    static_per_slot = cost_batch(st.solution, dims, pt, stack)
    for t, rep in enumerate(dyn):
        assert rep.converged
        assert rep.objective <= static_per_slot[t] + 1e-3 * max(1.0, static_per_slot[t])


def test_default_instance_static_solve_feasible():
    space, params, _, envs = make_instance(horizon=20, seed=2)
    rep = solve_static(space, params, envs)
    assert rep.converged
    assert rep.max_violation <= 1e-6
    assert np.isfinite(rep.objective) and rep.objective > 0


def test_path_length_hand_values():
    assert path_length(np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 4.0]])) == 5.0
    assert path_length(np.ones((7, 3))) == 0.0
    with pytest.raises(ValueError):
        path_length(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        path_length(np.zeros(5))


def test_report_helpers():
    reps = [SolveReport(np.array([1.0, 2.0]), 3.0, 0.0, 5, True, 10.0),
            SolveReport(np.array([0.0, 1.0]), 2.5, 0.0, 4, True, 10.0)]
    np.testing.assert_array_equal(dynamic_solutions_array(reps),
                                  [[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(dynamic_objectives(reps), [3.0, 2.5])
