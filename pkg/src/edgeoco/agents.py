"""Distributed primal-dual agents with one message round per slot.

Each node owns its action block, the multipliers of its own constraints,
and two inboxes. Per slot t:

1. every agent plays its current action and sends m1 (copies of the
   shared variables: offload/forward/transfer volumes) together with m2
   (the scalar flow multiplier of slot t-1, gated by its violation);
2. the environment is revealed;
3. agents evaluate their own constraints, using inbox m1 for foreign
   inflow terms;
4. dual update  lambda^t = h^t / (eta * sigma)  (exact, every variant);
5. primal update  x <- clip(x - eta * (H_local + H_ext), 0, ub)  where
   H_ext is assembled from inbox m2 -- one slot stale by construction.

Flow constraints read foreign variables only through +1 entries, so the
m2 scalar is all an agent needs from each constraint owner. A zero-delay
debug mode delivers m2 computed from the CURRENT slot's multipliers,
which collapses the scheme to the centralized same-slot update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import EnvSample
from .metrics import RecordBuilder, RunRecord
from .model import (
    ActionSpace,
    CostParams,
    bs_constraints,
    clip,
    device_constraints,
    node_cost_gradient,
    server_constraints,
    shannon_rate_derivative,
    total_cost,
)
from .topology import BS, DEVICE, SERVER, NodeId

COOPERATIVE = "cooperative"
ZERO_DELAY = "zero-delay"
SELFISH = "selfish"


@dataclass(frozen=True)
class HyperParams:
    eta: float
    sigma: float

    def __post_init__(self):
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError("eta must be positive")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class VarShare:
    """m1: copies of shared variables, keyed by recipient."""

    sender: NodeId
    values: dict[NodeId, float]


@dataclass(frozen=True)
class MultiplierFeedback:
    """m2: lambda_{n0}^{t-1} * 1{h_{n0}^{t-1} > 0}, broadcast by the owner
    of a flow constraint to every node whose variables appear in it."""

    sender: NodeId
    payload: float


class Agent:
    """State and update rules of one node."""

    def __init__(self, node: NodeId, space: ActionSpace, params: CostParams,
                 hp: HyperParams):
        self.node = node
        self.space = space
        self.params = params
        self.hp = hp
        self.top = space.top
        self.x = np.zeros(self.top.action_length(node))
        self.lam = np.zeros(self.top.constraint_length(node))
        self.g = np.zeros_like(self.lam)
        self.h = np.zeros_like(self.lam)
        self.pending_feedback = 0.0  # own flow multiplier of the last slot
        self.inbox_m1: dict[NodeId, float] = {}
        self.inbox_m2: dict[NodeId, float] = {}

    # --- messaging --------------------------------------------------------

    def emit_m1(self) -> VarShare:
        n, top = self.node, self.top
        if n.kind == DEVICE:
            values = {NodeId(BS, b): float(self.x[1 + b]) for b in range(top.B)}
        elif n.kind == BS:
            values = {NodeId(SERVER, s): float(self.x[1 + s]) for s in range(top.S)}
        else:
            values = {NodeId(SERVER, s2): float(self.x[1 + s2])
                      for s2 in range(top.S) if s2 != n.index}
        return VarShare(n, values)

    def emit_m2(self) -> MultiplierFeedback | None:
        if self.node.kind == DEVICE:
            return None  # devices own no coupled constraint
        return MultiplierFeedback(self.node, self.pending_feedback)

    def current_feedback(self) -> float:
        """Slot-t flow multiplier, for the zero-delay debug mode."""
        return float(self.lam[0]) if self.g[0] > 0 else 0.0

    # --- slot phases --------------------------------------------------------

    def observe(self, env: EnvSample, inflow: float | None) -> None:
        """Evaluate own constraints at the played action."""
        n = self.node
        if n.kind == DEVICE:
            self.g = device_constraints(self.space, self.params, n.index,
                                        self.x, env.demand[n.index],
                                        env.gain_dev[n.index])
        elif n.kind == BS:
            self.g = bs_constraints(self.space, self.params, n.index,
                                    self.x, inflow, env.gain_bs[n.index])
        else:
            self.g = server_constraints(self.space, self.params, n.index,
                                        self.x, inflow)
        self.h = clip(self.g)

    def dual_update(self) -> None:
        self.lam = self.h / (self.hp.eta * self.hp.sigma)

    def local_term(self, env: EnvSample, selfish: bool) -> np.ndarray:
        """H_local for devices and BSs: own cost gradient plus own
        multiplier pressure, accumulated row by row in local order.

        In the selfish variant the coupled flow constraint of a BS is
        invisible at decision time (its inflow is a foreign measurement),
        so its multiplier term is dropped; device constraints are fully
        local and stay either way.
        """
        n, top = self.node, self.top
        grad = node_cost_gradient(self.space, self.params, n, self.x, env)
        coef = self.lam * (self.g > 0)
        if n.kind == DEVICE:
            B = top.B
            grad[0] -= coef[0]
            grad[1 : 1 + B] -= coef[0]
            for b in range(B):
                c = coef[1 + b]
                grad[1 + b] += c
                grad[1 + B + b] -= c * shannon_rate_derivative(
                    self.x[1 + B + b], env.gain_dev[n.index, b], self.params.bandwidth)
            return grad
        S = top.S
        if not selfish:
            grad[0] -= coef[0]
            grad[1 : 1 + S] -= coef[0]
        for s in range(S):
            c = coef[1 + s]
            grad[1 + s] += c
            grad[1 + S + s] -= c * shannon_rate_derivative(
                self.x[1 + S + s], env.gain_bs[n.index, s], self.params.bandwidth)
        return grad

    def external_term(self) -> np.ndarray:
        """H_ext from inbox m2 for devices and BSs. Foreign flow rows read
        these nodes' variables through +1 entries exactly."""
        n, top = self.node, self.top
        out = np.zeros_like(self.x)
        if n.kind == DEVICE:
            for b in range(top.B):
                out[1 + b] = self.inbox_m2.get(NodeId(BS, b), 0.0)
        else:
            for s in range(top.S):
                out[1 + s] = self.inbox_m2.get(NodeId(SERVER, s), 0.0)
        return out

    def primal_update(self, env: EnvSample, mode: str) -> None:
        selfish = mode == SELFISH
        n = self.node
        if n.kind == SERVER:
            grad = node_cost_gradient(self.space, self.params, n, self.x, env)
            if not selfish:
                coef0 = float(self.lam[0]) if self.g[0] > 0 else 0.0
                # own flow row and foreign flow rows interleaved in
                # constraint-owner order, mirroring a row-ascending global
                # accumulation bit for bit
                for s2 in range(self.top.S):
                    if s2 == n.index:
                        grad -= coef0
                    else:
                        grad[1 + s2] += self.inbox_m2.get(NodeId(SERVER, s2), 0.0)
        else:
            grad = self.local_term(env, selfish)
            if not selfish:
                grad = grad + self.external_term()
        self.x = np.clip(self.x - self.hp.eta * grad,
                         0.0, self.space.node_upper(self.node))

    def stash_feedback(self) -> None:
        self.pending_feedback = self.current_feedback()


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------

def make_agents(space: ActionSpace, params: CostParams,
                hp: HyperParams) -> dict[NodeId, Agent]:
    return {n: Agent(n, space, params, hp) for n in space.top.nodes}


def _deliver_m1(agents: dict[NodeId, Agent]) -> int:
    for a in agents.values():
        a.inbox_m1 = {}
    count = 0
    for a in agents.values():
        share = a.emit_m1()
        count += len(share.values)
        for recipient, value in share.values.items():
            agents[recipient].inbox_m1[share.sender] = value
    return count


def _deliver_m2(agents: dict[NodeId, Agent], top, mode: str) -> int:
    for a in agents.values():
        a.inbox_m2 = {}
    if mode == SELFISH:
        return 0
    count = 0
    for a in agents.values():
        msg = a.emit_m2()
        if msg is None:
            continue
        if mode == ZERO_DELAY:
            msg = MultiplierFeedback(msg.sender, a.current_feedback())
        count += 1  # broadcast counted once
        if msg.sender.kind == BS:
            recipients = top.devices
        else:
            recipients = tuple(b for b in top.stations) + tuple(
                s for s in top.servers if s != msg.sender)
        for r in recipients:
            agents[r].inbox_m2[msg.sender] = msg.payload
    return count


def _inflow(agents: dict[NodeId, Agent], top, node: NodeId) -> float | None:
    """Foreign inflow of a flow constraint, summed in fixed node order so
    the recorded values match the global reference bit for bit."""
    if node.kind == DEVICE:
        return None
    a = agents[node]
    if node.kind == BS:
        return sum(a.inbox_m1[d] for d in top.devices)
    return sum(a.inbox_m1[b] for b in top.stations) + sum(
        a.inbox_m1[s2] for s2 in top.servers if s2 != node)


def run_slot(agents: dict[NodeId, Agent], space: ActionSpace, params: CostParams,
             env: EnvSample, mode: str, builder: RecordBuilder) -> None:
    top = space.top
    # 1. play + message exchange; m2 still carries slot t-1 information
    n_m1 = _deliver_m1(agents)
    if mode != ZERO_DELAY:
        n_m2 = _deliver_m2(agents, top, mode)
    x_played = np.concatenate([agents[n].x for n in top.nodes])
    # 2.-3. environment revealed, own constraints evaluated
    for n in top.nodes:
        agents[n].observe(env, _inflow(agents, top, n))
    # 4. dual updates everywhere before any primal moves
    for n in top.nodes:
        agents[n].dual_update()
    if mode == ZERO_DELAY:
        n_m2 = _deliver_m2(agents, top, mode)
    # record the slot before the primal step mutates x
    g = np.concatenate([agents[n].g for n in top.nodes])
    h = np.concatenate([agents[n].h for n in top.nodes])
    lam = np.concatenate([agents[n].lam for n in top.nodes])
    f = total_cost(space, params, x_played, env)
    builder.add(x_played, f, g, h, lam, m1=n_m1, m2=n_m2)
    # 5. primal updates
    for n in top.nodes:
        agents[n].primal_update(env, mode)
    for n in top.nodes:
        agents[n].stash_feedback()


def run_distributed(space: ActionSpace, params: CostParams, envs,
                    hp: HyperParams, mode: str = COOPERATIVE) -> RunRecord:
    if mode not in (COOPERATIVE, ZERO_DELAY, SELFISH):
        raise ValueError(f"unknown mode {mode!r}")
    agents = make_agents(space, params, hp)
    builder = RecordBuilder()
    for env in envs:
        run_slot(agents, space, params, env, mode, builder)
    return builder.build()


def run_cooperative(space: ActionSpace, params: CostParams, envs,
                    hp: HyperParams, zero_delay: bool = False) -> RunRecord:
    return run_distributed(space, params, envs, hp,
                           ZERO_DELAY if zero_delay else COOPERATIVE)
