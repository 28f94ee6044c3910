"""Global-vector reference algorithms.

``run_centralized`` is the same-slot primal-dual update applied to the
whole action vector by one omniscient controller: dual step from the
current violations, then one projected gradient step using the current
multipliers everywhere. The distributed scheme in zero-delay debug mode
must reproduce it exactly; with real one-slot feedback delay it only
approaches it.

``run_monolithic_cooperative`` simulates the delayed cooperative scheme
on the global vector: every constraint row pressures its owner's columns
with the current multiplier and everyone else's columns with the
multiplier of the previous slot. It is the single-process mirror of the
message-passing engine and must match it bit for bit.

``run_selfish`` runs the message-passing engine with coupled flow
constraints dropped from every decision: no multiplier feedback is sent
and BSs/servers ignore inflow pressure, keeping only their local rate
constraints. Violations are still measured and recorded.

All variants share the dual rule lambda^t = h^t/(eta*sigma) for the
record, so fit and regret are comparable across them.
"""

from __future__ import annotations

import numpy as np

from .agents import SELFISH, HyperParams, run_distributed
from .metrics import RecordBuilder, RunRecord
from .model import (
    ActionSpace,
    CostParams,
    clip,
    constraint_jacobian,
    constraints,
    total_cost,
    total_cost_gradient,
)
from .topology import constraint_index


def run_centralized(space: ActionSpace, params: CostParams, envs,
                    hp: HyperParams) -> RunRecord:
    """Same-slot global primal-dual update (no delay, no messages)."""
    eta, sigma = hp.eta, hp.sigma
    top = space.top
    M = top.num_constraints
    x = space.zeros()
    builder = RecordBuilder()
    for env in envs:
        g = constraints(space, params, x, env)
        h = clip(g)
        lam = h / (eta * sigma)
        builder.add(x, total_cost(space, params, x, env), g, h, lam)
        coef = lam * (g > 0)
        J = constraint_jacobian(space, params, x, env)
        grad = total_cost_gradient(space, params, x, env)
        for m in range(M):  # row-ascending accumulation, kept sequential
            grad += coef[m] * J[m]
        x = space.project(x - eta * grad)
    return builder.build()


def run_monolithic_cooperative(space: ActionSpace, params: CostParams, envs,
                               hp: HyperParams) -> RunRecord:
    """Delayed cooperative update on the global vector.

    Row m's pressure splits into the owner's own columns (current
    multiplier) and foreign columns (previous slot's multiplier, which is
    what the owner broadcast). Accumulation stays row-ascending so the
    floating-point result matches the per-node engine exactly.
    """
    eta, sigma = hp.eta, hp.sigma
    top = space.top
    M, V = top.num_constraints, top.num_variables
    cindex = constraint_index(top)
    own_mask = np.zeros((M, V))
    for m in range(M):
        node, _ = cindex.to_local(m)
        own_mask[m, space.block(node)] = 1.0
    ext_mask = 1.0 - own_mask

    x = space.zeros()
    stale = np.zeros(M)  # lambda * 1{g > 0} of the previous slot
    builder = RecordBuilder()
    n_m1 = top.num_edges
    n_m2 = top.B + top.S
    for env in envs:
        g = constraints(space, params, x, env)
        h = clip(g)
        lam = h / (eta * sigma)
        builder.add(x, total_cost(space, params, x, env), g, h, lam,
                    m1=n_m1, m2=n_m2)
        coef = lam * (g > 0)
        J = constraint_jacobian(space, params, x, env)
        grad = total_cost_gradient(space, params, x, env)
        for m in range(M):
            row = J[m]
            grad += coef[m] * (row * own_mask[m])
            grad += stale[m] * (row * ext_mask[m])
        x = space.project(x - eta * grad)
        stale = coef
    return builder.build()


def run_selfish(space: ActionSpace, params: CostParams, envs,
                hp: HyperParams) -> RunRecord:
    """Uncoordinated variant: everyone optimizes as if downstream queues
    were not their problem."""
    return run_distributed(space, params, envs, hp, mode=SELFISH)
