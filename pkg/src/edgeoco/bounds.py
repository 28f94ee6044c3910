"""A-priori performance guarantees for the delayed-feedback primal-dual run.

The guarantee expressions need five instance constants besides the
topology counts: the diameter of the joint action box, a ceiling on any
single node's per-slot cost, and a ceiling on the Euclidean norm of any
single node's clipped constraint vector. Every cost term and every
constraint row is monotone in each variable over the box, so the suprema
sit at box corners paired with extreme environment draws, and all three
constants come out in closed form.

``sigma_floor`` is the dual-damping threshold below which the fit
guarantee degenerates (its prefactor 1/beta turns nonpositive);
``sigma_auto`` places the damping a configurable margin above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import EnvConfig
from .model import ActionSpace, CostParams, safe_inv


@dataclass(frozen=True)
class BoundConstants:
    """Instance constants entering the guarantee expressions."""

    radius: float           # diameter of the joint box (all nodes stacked)
    cost_ceiling: float     # max over nodes of sup |f_n|
    h_norm_ceiling: float   # max over nodes of sup ||h_n||
    num_nodes: int
    num_constraints: int
    num_edges: int
    coupling: int


def _cost_ceiling(space: ActionSpace, params: CostParams,
                  delay_hi: float) -> float:
    """Largest per-slot cost any single node can incur over the box.

    Each queue term peaks at zero service rate and a full backlog
    variable, the processing terms at a full local share, the linear
    delay terms at the largest draw of the delay coefficient.
    """
    bb = space.bounds
    B, S = space.top.B, space.top.S
    dev = (safe_inv(params.cap_device - bb.w_local, params.delta_device)[0]
           + B * safe_inv(-bb.w_offload, params.delta_queue)[0]
           + 0.5 * B * bb.p_tx ** 2)
    bs = (delay_hi * bb.y_cloud
          + S * safe_inv(-bb.y_offload, params.delta_queue)[0]
          + 0.5 * S * bb.q_tx ** 2)
    srv = (delay_hi * bb.z_cloud
           + safe_inv(params.cap_server - bb.z_local, params.delta_server)[0]
           + (S - 1) * delay_hi * bb.z_wired)
    return float(max(dev, bs, srv))


def _h_norm_ceiling(space: ActionSpace, demand_hi: float) -> float:
    """Largest ||[g_n]^+|| any single node can see over the box.

    Flow rows peak at full inflow and zero outflow, rate rows at a full
    backlog variable and zero transmit power (rate terms only shrink a
    row, so they are dropped from the positive part).
    """
    bb = space.bounds
    D, B, S = space.top.D, space.top.B, space.top.S
    dev = math.sqrt(demand_hi ** 2 + B * bb.w_offload ** 2)
    bs = math.sqrt((D * bb.w_offload) ** 2 + S * bb.y_offload ** 2)
    srv = float(B * bb.y_offload + (S - 1) * bb.z_wired)
    return float(max(dev, bs, srv))


def bound_constants(space: ActionSpace, params: CostParams, cfg: EnvConfig,
                    demand_hi: float | None = None,
                    delay_hi: float | None = None) -> BoundConstants:
    """Assemble the instance constants.

    ``demand_hi``/``delay_hi`` override the environment-config ranges,
    for runs driven by an external demand trace whose peak exceeds the
    configured sampling range.
    """
    top = space.top
    if demand_hi is None:
        demand_hi = cfg.demand_range[1]
    if delay_hi is None:
        delay_hi = cfg.delay_range[1]
    return BoundConstants(
        radius=float(np.linalg.norm(space.upper)),
        cost_ceiling=_cost_ceiling(space, params, float(delay_hi)),
        h_norm_ceiling=_h_norm_ceiling(space, float(demand_hi)),
        num_nodes=top.num_nodes,
        num_constraints=top.num_constraints,
        num_edges=top.num_edges,
        coupling=top.coupling_count,
    )


def sigma_floor(consts: BoundConstants) -> float:
    """Dual damping below which the fit guarantee prefactor degenerates."""
    return 3.0 * consts.coupling * consts.h_norm_ceiling ** 2


def sigma_auto(consts: BoundConstants, margin: float = 1.05) -> float:
    """Smallest guarantee-valid damping with a safety margin."""
    if margin <= 1.0:
        raise ValueError("margin must exceed 1")
    return margin * sigma_floor(consts)


def step_size(eta0: float, horizon: int) -> float:
    """Horizon-scaled primal step eta0 / sqrt(T)."""
    if eta0 <= 0.0:
        raise ValueError("eta0 must be positive")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    return eta0 / math.sqrt(horizon)


@dataclass(frozen=True)
class Guarantees:
    """Upper bounds on regret and fit for one (eta, sigma, T) setting."""

    static_regret: float
    dynamic_regret: float
    fit: float              # inf when sigma is at or below the floor
    beta: float             # 1 - sigma_floor / sigma
    sigma_floor: float


def guarantees(consts: BoundConstants, eta: float, sigma: float,
               horizon: int, path_length: float = 0.0) -> Guarantees:
    """Evaluate the guarantee expressions.

    * static regret:  R^2/(2 eta) + 2 R E G^2/(eta sigma)
                      + (7/2) eta N F^2 T
    * dynamic regret: the static bound + (R/eta) * path_length of the
      per-slot optima
    * fit:            sqrt((eta sigma / beta) M T (U_static + 2 N F T)),
      requiring sigma strictly above the floor 3 K G^2

    with R the box diameter, F/G the per-node ceilings, N/M/E/K the
    topology counts.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if path_length < 0.0:
        raise ValueError("path_length must be nonnegative")
    R = consts.radius
    F = consts.cost_ceiling
    G = consts.h_norm_ceiling
    N = consts.num_nodes
    M = consts.num_constraints
    E = consts.num_edges
    T = float(horizon)
    floor = sigma_floor(consts)
    beta = 1.0 - floor / sigma

    u_static = (R ** 2 / (2.0 * eta)
                + 2.0 * R * E * G ** 2 / (eta * sigma)
                + 3.5 * eta * N * F ** 2 * T)
    u_dynamic = u_static + (R / eta) * path_length
    if beta > 0.0:
        u_fit = math.sqrt((eta * sigma / beta) * M * T
                          * (u_static + 2.0 * N * F * T))
    else:
        u_fit = math.inf
    return Guarantees(static_regret=u_static, dynamic_regret=u_dynamic,
                      fit=u_fit, beta=beta, sigma_floor=floor)
