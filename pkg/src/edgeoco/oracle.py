"""Clairvoyant benchmark solvers.

Two box-constrained convex programs back the regret metrics:

* static:   min_x  sum_t f^t(x)   s.t.  g^t(x) <= 0 for every t,
* dynamic:  min_x  f^t(x)         s.t.  g^t(x) <= 0, one solve per slot.

Both are solved by the method of multipliers: minimize the augmented
Lagrangian ``sum_t f^t(x) + sum_tm (max(0, mu_tm + rho g^t_m)^2
- mu_tm^2) / (2 rho)`` over the box with a projected Newton method, then
update ``mu_tm <- max(0, mu_tm + rho g^t_m)`` and repeat until the worst
violation is inside tolerance. Feasibility comes from the multiplier
iteration at a moderate, bounded rho, so the subproblems stay well
conditioned and their solutions sit a distance mu/rho inside a smooth
piece of the (C^1) augmented objective; rho is only raised when an outer
round fails to shrink the violation enough.

Heavy evaluation goes through the fused batch kernel, which has a
compiled variant; everything here is solver logic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import EnvStack, al_eval, al_hessian, constraints_batch, stack_envs
from .model import ActionSpace, CostParams


def params_tuple(params: CostParams) -> tuple:
    return (params.bandwidth, params.cap_device, params.cap_server,
            params.delta_device, params.delta_server, params.delta_queue)


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    objective: float       # un-penalized cost sum at the solution
    max_violation: float
    iterations: int        # inner Newton iterations across all rounds
    converged: bool
    rho: float             # final penalty weight


def _minimize_al(space: ActionSpace, dims, pt, stack: EnvStack,
                 x0: np.ndarray, rho: float, mu: np.ndarray,
                 max_inner: int, gtol: float, c_armijo: float):
    """Projected Newton descent on the augmented Lagrangian.

    Coordinates pinned at a bound with the gradient pushing outward are
    frozen; the Newton system is solved on the rest with a small
    diagonal shift, falling back to the negative gradient whenever the
    step is not a descent direction. Backtracking halves the step until
    the Armijo condition on the projected move holds. Stops on a small
    projected gradient or when no improving step exists. Returns
    (x, cost_sum, max_violation, iterations).
    """
    x = np.asarray(x0, dtype=float).copy()
    upper = space.upper
    cost, pen, grad, maxv = al_eval(x, dims, pt, stack, rho, mu)
    val = cost + pen
    iters = 0
    for _ in range(max_inner):
        proj_grad = x - np.clip(x - grad, 0.0, upper)
        if float(np.max(np.abs(proj_grad))) <= gtol * (1.0 + abs(val)):
            break
        fixed = ((x <= 1e-12) & (grad > 0.0)) | \
                ((x >= upper - 1e-12) & (grad < 0.0))
        free = ~fixed
        gf = grad[free]
        if gf.size == 0:
            break
        iters += 1
        hess = al_hessian(x, dims, pt, stack, rho, mu)[np.ix_(free, free)]
        shift = 1e-9 * max(1.0, float(np.max(np.abs(np.diag(hess)))))
        hess[np.diag_indices_from(hess)] += shift
        try:
            dn = np.linalg.solve(hess, -gf)
        except np.linalg.LinAlgError:
            dn = -gf
        if float(gf @ dn) >= 0.0:
            dn = -gf
        direction = np.zeros_like(x)
        direction[free] = dn
        step = 1.0
        accepted = False
        for _ in range(60):
            x_new = np.clip(x + step * direction, 0.0, upper)
            move = x_new - x
            if not np.any(move):
                break
            cost_n, pen_n, grad_n, maxv_n = al_eval(
                x_new, dims, pt, stack, rho, mu)
            val_n = cost_n + pen_n
            if val_n <= val + c_armijo * float(grad @ move):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        x, val, grad = x_new, val_n, grad_n
        cost, maxv = cost_n, maxv_n
    return x, cost, maxv, iters


def solve_constrained(space: ActionSpace, params: CostParams, stack: EnvStack,
                      x0: np.ndarray | None = None, rho0: float = 1e3,
                      feas_tol: float = 1e-6, gtol: float = 1e-9,
                      c_armijo: float = 1e-4, max_outer: int = 40,
                      max_inner: int = 100,
                      rho_max: float = 1e8) -> SolveReport:
    """Multiplier iteration for one batch of slots.

    rho is raised tenfold only when a round fails to cut the worst
    violation to a quarter, the usual progress test, so conditioning
    stays bounded while the multiplier estimates do the work.
    """
    top = space.top
    dims = (top.D, top.B, top.S)
    pt = params_tuple(params)
    if x0 is None:
        x = 0.5 * space.upper
    else:
        x = space.project(np.asarray(x0, dtype=float))
    T = stack.demand.shape[0]
    mu = np.zeros((T, top.num_constraints))
    rho = float(rho0)
    total = 0
    prev_maxv = np.inf
    cost = maxv = np.inf
    for _ in range(max_outer):
        x, cost, maxv, iters = _minimize_al(
            space, dims, pt, stack, x, rho, mu, max_inner, gtol, c_armijo)
        total += iters
        if maxv <= feas_tol:
            return SolveReport(x, float(cost), float(maxv), total, True, rho)
        mu = np.maximum(0.0, mu + rho * constraints_batch(x, dims, pt, stack))
        if maxv > 0.25 * prev_maxv:
            rho = min(rho * 10.0, rho_max)
        prev_maxv = maxv
    return SolveReport(x, float(cost), float(maxv), total, False, rho)


def solve_static(space: ActionSpace, params: CostParams, envs,
                 x0: np.ndarray | None = None, **kw) -> SolveReport:
    """Best fixed action for the given slots, feasible in every one of them."""
    stack = envs if isinstance(envs, EnvStack) else stack_envs(list(envs))
    return solve_constrained(space, params, stack, x0=x0, **kw)


def solve_dynamic(space: ActionSpace, params: CostParams, envs,
                  **kw) -> list[SolveReport]:
    """Per-slot optima, each solve warm-started from the previous slot."""
    reports: list[SolveReport] = []
    warm = None
    for env in envs:
        rep = solve_constrained(space, params, stack_envs([env]), x0=warm, **kw)
        reports.append(rep)
        warm = rep.solution
    return reports


def path_length(solutions) -> float:
    """Total movement of the per-slot optima, the slack a drifting
    comparator adds to the regret bound. The slot-0 anchor is the first
    solution, so a constant sequence has zero path length."""
    xs = np.asarray(solutions, dtype=float)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("need a nonempty (T, V) array of solutions")
    return float(np.sum(np.linalg.norm(np.diff(xs, axis=0), axis=1)))


def dynamic_solutions_array(reports: list[SolveReport]) -> np.ndarray:
    return np.stack([r.solution for r in reports])


def dynamic_objectives(reports: list[SolveReport]) -> np.ndarray:
    return np.array([r.objective for r in reports])
