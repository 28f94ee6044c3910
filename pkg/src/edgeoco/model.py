"""Cost model, constraints and gradients for the three-tier allocation problem.

Decision variables per node (all in tasks/slot except transmit powers):

* device d:  ``[w_d0, w_d1..w_dB, p_d1..p_dB]`` -- local processing, per-BS
  offload volumes, per-BS transmit powers;
* BS b:      ``[y_b0, y_b1..y_bS, q_b1..q_bS]`` -- cloud forward, per-server
  forward volumes, per-server transmit powers;
* server s:  ``[z_s0, z_s1..z_sS]`` -- cloud forward and per-server transfer
  volumes, where the s->s entry is local processing.

Costs: processing queues are M/M/1-style ``1/(capacity - load)`` with a C^1
convex extension past a configurable margin so the simulator never divides
by a vanishing denominator; wireless hops pay ``1/(rate(power) - load)``
plus a quadratic power price; cloud and wired hops pay a per-task delay
drawn by the environment. Constraints are flow conservation plus per-link
rate feasibility, arranged in the global row order of
:func:`edgeoco.topology.constraint_index`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import EnvSample
from .topology import BS, DEVICE, SERVER, NodeId, Topology

LN2 = np.log(2.0)
POWER_WEIGHT = 0.5  # fixed quadratic power price


# --------------------------------------------------------------------------
# scalar building blocks
# --------------------------------------------------------------------------

def safe_inv(u, delta: float):
    """Value and derivative of 1/u extended linearly below ``delta``.

    For u >= delta this is exactly (1/u, -1/u**2); below, the first-order
    Taylor continuation at delta, keeping the function convex, decreasing
    and C^1 on the whole real line. Accepts scalars or arrays.
    """
    if delta <= 0:
        raise ValueError("extension margin must be positive")
    u = np.asarray(u, dtype=float)
    inside = u >= delta
    u_safe = np.where(inside, u, delta)  # avoid 1/0 in the masked branch
    val = np.where(inside, 1.0 / u_safe, 1.0 / delta + (delta - u) / delta**2)
    der = np.where(inside, -1.0 / u_safe**2, -1.0 / delta**2)
    if val.ndim == 0:
        return float(val), float(der)
    return val, der


def shannon_rate(power, gain, bandwidth: float):
    """Link rate  b * log2(1 + gain * power)."""
    return bandwidth * np.log2(1.0 + np.asarray(gain, dtype=float) * power)

def shannon_rate_derivative(power, gain, bandwidth: float):
    gain = np.asarray(gain, dtype=float)
    return bandwidth * gain / (LN2 * (1.0 + gain * power))


def clip(g):
    """Positive part [g]^+, the violation actually penalized."""
    return np.maximum(0.0, g)


def clipped_gradient_factor(g):
    """Derivative factor of [g]^+ w.r.t. g: 1 where g > 0, else 0 (0 at g == 0 too)."""
    return (np.asarray(g) > 0.0).astype(float)


# --------------------------------------------------------------------------
# action layout and parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxBounds:
    """Per-kind upper bounds of the box Omega (lower bounds are all zero)."""

    w_local: float = 2.0
    w_offload: float = 25.0
    p_tx: float = 25.0
    y_cloud: float = 30.0
    y_offload: float = 25.0
    q_tx: float = 25.0
    z_cloud: float = 50.0
    z_local: float = 15.0
    z_wired: float = 10.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"box bound {name} must be positive and finite")


class ActionSpace:
    """Flat layout of the global action vector plus the box bounds.

    Blocks are ordered devices, then BSs, then servers; within-block order
    is documented at module level. ``upper`` is the (V,) vector of bounds.
    """

    def __init__(self, top: Topology, bounds: BoxBounds = BoxBounds()):
        self.top = top
        self.bounds = bounds
        D, B, S = top.D, top.B, top.S
        self.dev_len = 2 * B + 1
        self.bs_len = 2 * S + 1
        self.srv_len = S + 1
        self.dev_base = 0
        self.bs_base = D * self.dev_len
        self.srv_base = self.bs_base + B * self.bs_len
        self.V = top.num_variables

        ub = np.empty(self.V)
        for d in range(D):
            o = self.dev_base + d * self.dev_len
            ub[o] = bounds.w_local
            ub[o + 1 : o + 1 + B] = bounds.w_offload
            ub[o + 1 + B : o + 1 + 2 * B] = bounds.p_tx
        for b in range(B):
            o = self.bs_base + b * self.bs_len
            ub[o] = bounds.y_cloud
            ub[o + 1 : o + 1 + S] = bounds.y_offload
            ub[o + 1 + S : o + 1 + 2 * S] = bounds.q_tx
        for s in range(S):
            o = self.srv_base + s * self.srv_len
            ub[o] = bounds.z_cloud
            ub[o + 1 : o + 1 + S] = bounds.z_wired
            ub[o + 1 + s] = bounds.z_local  # the s->s slot is local processing
        self.upper = ub

    # flat indices of individual variables
    def iw0(self, d: int) -> int:
        return self.dev_base + d * self.dev_len

    def iw(self, d: int, b: int) -> int:
        return self.dev_base + d * self.dev_len + 1 + b

    def ip(self, d: int, b: int) -> int:
        return self.dev_base + d * self.dev_len + 1 + self.top.B + b

    def iy0(self, b: int) -> int:
        return self.bs_base + b * self.bs_len

    def iy(self, b: int, s: int) -> int:
        return self.bs_base + b * self.bs_len + 1 + s

    def iq(self, b: int, s: int) -> int:
        return self.bs_base + b * self.bs_len + 1 + self.top.S + s

    def iz0(self, s: int) -> int:
        return self.srv_base + s * self.srv_len

    def iz(self, s: int, s2: int) -> int:
        return self.srv_base + s * self.srv_len + 1 + s2

    def block(self, node: NodeId) -> slice:
        self.top.check_node(node)
        if node.kind == DEVICE:
            o = self.dev_base + node.index * self.dev_len
            return slice(o, o + self.dev_len)
        if node.kind == BS:
            o = self.bs_base + node.index * self.bs_len
            return slice(o, o + self.bs_len)
        o = self.srv_base + node.index * self.srv_len
        return slice(o, o + self.srv_len)

    def node_upper(self, node: NodeId) -> np.ndarray:
        return self.upper[self.block(node)]

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, 0.0, self.upper)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.V)


@dataclass(frozen=True)
class CostParams:
    """Cost-model parameters. Capacities must clear the box bounds so the
    M/M/1 terms only enter their extension region, never a true pole."""

    bandwidth: float = 1.0
    cap_device: float = 2.2
    cap_server: float = 16.5
    delta_device: float = 0.22
    delta_server: float = 1.65
    delta_queue: float = 0.5

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        for cap, delta in ((self.cap_device, self.delta_device),
                           (self.cap_server, self.delta_server)):
            if not 0 < delta < cap:
                raise ValueError("need 0 < margin < capacity")
        if self.delta_queue <= 0:
            raise ValueError("queue margin must be positive")

    @staticmethod
    def from_space(space: ActionSpace, cap_factor: float = 1.1,
                   delta_frac: float = 0.1, delta_queue: float = 0.5,
                   bandwidth: float = 1.0) -> "CostParams":
        if cap_factor <= 1.0:
            raise ValueError("capacity must exceed the box bound")
        cap_d = cap_factor * space.bounds.w_local
        cap_s = cap_factor * space.bounds.z_local
        return CostParams(bandwidth=bandwidth,
                          cap_device=cap_d, cap_server=cap_s,
                          delta_device=delta_frac * cap_d,
                          delta_server=delta_frac * cap_s,
                          delta_queue=delta_queue)

    def validate_against(self, space: ActionSpace) -> None:
        if self.cap_device <= space.bounds.w_local:
            raise ValueError("device capacity must exceed the local-processing bound")
        if self.cap_server <= space.bounds.z_local:
            raise ValueError("server capacity must exceed the local-processing bound")


# --------------------------------------------------------------------------
# per-node costs and gradients
# --------------------------------------------------------------------------

def node_cost(space: ActionSpace, params: CostParams, node: NodeId,
              x_n: np.ndarray, env: EnvSample) -> float:
    top = space.top
    B, S = top.B, top.S
    if node.kind == DEVICE:
        w0 = x_n[0]
        w = x_n[1 : 1 + B]
        p = x_n[1 + B : 1 + 2 * B]
        proc, _ = safe_inv(params.cap_device - w0, params.delta_device)
        rate = shannon_rate(p, env.gain_dev[node.index], params.bandwidth)
        queue, _ = safe_inv(rate - w, params.delta_queue)
        return float(proc + np.sum(queue) + POWER_WEIGHT * np.sum(p * p))
    if node.kind == BS:
        y0 = x_n[0]
        y = x_n[1 : 1 + S]
        q = x_n[1 + S : 1 + 2 * S]
        rate = shannon_rate(q, env.gain_bs[node.index], params.bandwidth)
        queue, _ = safe_inv(rate - y, params.delta_queue)
        return float(env.cloud_delay_bs[node.index] * y0
                     + np.sum(queue) + POWER_WEIGHT * np.sum(q * q))
    s = node.index
    z0 = x_n[0]
    z = x_n[1 : 1 + S]
    proc, _ = safe_inv(params.cap_server - z[s], params.delta_server)
    wired = env.wired_delay[s].copy()
    wired[s] = 0.0  # local slot pays the processing queue, not a wire
    return float(env.cloud_delay_srv[s] * z0 + proc + float(wired @ z))


def node_cost_gradient(space: ActionSpace, params: CostParams, node: NodeId,
                       x_n: np.ndarray, env: EnvSample) -> np.ndarray:
    top = space.top
    B, S = top.B, top.S
    g = np.zeros_like(x_n)
    if node.kind == DEVICE:
        w0 = x_n[0]
        w = x_n[1 : 1 + B]
        p = x_n[1 + B : 1 + 2 * B]
        _, dproc = safe_inv(params.cap_device - w0, params.delta_device)
        gain = env.gain_dev[node.index]
        rate = shannon_rate(p, gain, params.bandwidth)
        _, dqueue = safe_inv(rate - w, params.delta_queue)
        g[0] = -dproc
        g[1 : 1 + B] = -dqueue
        g[1 + B :] = dqueue * shannon_rate_derivative(p, gain, params.bandwidth) + p
        return g
    if node.kind == BS:
        y = x_n[1 : 1 + S]
        q = x_n[1 + S : 1 + 2 * S]
        gain = env.gain_bs[node.index]
        rate = shannon_rate(q, gain, params.bandwidth)
        _, dqueue = safe_inv(rate - y, params.delta_queue)
        g[0] = env.cloud_delay_bs[node.index]
        g[1 : 1 + S] = -dqueue
        g[1 + S :] = dqueue * shannon_rate_derivative(q, gain, params.bandwidth) + q
        return g
    s = node.index
    z = x_n[1 : 1 + S]
    _, dproc = safe_inv(params.cap_server - z[s], params.delta_server)
    g[0] = env.cloud_delay_srv[s]
    g[1:] = env.wired_delay[s]
    g[1 + s] = -dproc
    return g


def total_cost(space: ActionSpace, params: CostParams,
               x: np.ndarray, env: EnvSample) -> float:
    return sum(node_cost(space, params, n, x[space.block(n)], env)
               for n in space.top.nodes)


def total_cost_gradient(space: ActionSpace, params: CostParams,
                        x: np.ndarray, env: EnvSample) -> np.ndarray:
    out = np.zeros_like(x)
    for n in space.top.nodes:
        blk = space.block(n)
        out[blk] = node_cost_gradient(space, params, n, x[blk], env)
    return out


# --------------------------------------------------------------------------
# constraints
# --------------------------------------------------------------------------

def device_constraints(space: ActionSpace, params: CostParams, d: int,
                       x_d: np.ndarray, demand: float,
                       gains: np.ndarray) -> np.ndarray:
    """[flow, rate_1..rate_B] for device d; needs no foreign variables."""
    B = space.top.B
    w0 = x_d[0]
    w = x_d[1 : 1 + B]
    p = x_d[1 + B : 1 + 2 * B]
    out = np.empty(B + 1)
    out[0] = demand - w0 - np.sum(w)
    out[1:] = w - shannon_rate(p, gains, params.bandwidth)
    return out


def bs_constraints(space: ActionSpace, params: CostParams, b: int,
                   x_b: np.ndarray, inflow: float,
                   gains: np.ndarray) -> np.ndarray:
    """[flow, rate_1..rate_S] for BS b; ``inflow`` is sum_d w_db."""
    S = space.top.S
    y0 = x_b[0]
    y = x_b[1 : 1 + S]
    q = x_b[1 + S : 1 + 2 * S]
    out = np.empty(S + 1)
    out[0] = inflow - y0 - np.sum(y)
    out[1:] = y - shannon_rate(q, gains, params.bandwidth)
    return out


def server_constraints(space: ActionSpace, params: CostParams, s: int,
                       x_s: np.ndarray, inflow: float) -> np.ndarray:
    """[flow] for server s; ``inflow`` is sum_b y_bs + sum_{s'!=s} z_s's."""
    return np.array([inflow - x_s[0] - np.sum(x_s[1:])])


def constraints(space: ActionSpace, params: CostParams,
                x: np.ndarray, env: EnvSample) -> np.ndarray:
    """All M constraint values in global row order."""
    top = space.top
    D, B, S = top.D, top.B, top.S
    out = np.empty(top.num_constraints)
    pos = 0
    for d in range(D):
        out[pos : pos + B + 1] = device_constraints(
            space, params, d, x[space.block(NodeId(DEVICE, d))],
            env.demand[d], env.gain_dev[d])
        pos += B + 1
    for b in range(B):
        inflow = sum(x[space.iw(d, b)] for d in range(D))
        out[pos : pos + S + 1] = bs_constraints(
            space, params, b, x[space.block(NodeId(BS, b))],
            inflow, env.gain_bs[b])
        pos += S + 1
    for s in range(S):
        inflow = sum(x[space.iy(b, s)] for b in range(B)) \
            + sum(x[space.iz(s2, s)] for s2 in range(S) if s2 != s)
        out[pos] = server_constraints(
            space, params, s, x[space.block(NodeId(SERVER, s))], inflow)[0]
        pos += 1
    return out


def constraint_jacobian(space: ActionSpace, params: CostParams,
                        x: np.ndarray, env: EnvSample) -> np.ndarray:
    """Dense (M, V) Jacobian of the raw constraints g (not clipped).

    Flow rows carry only +-1 entries; rate rows carry +1 on the volume and
    the negated rate derivative on the power. Reference implementation for
    the centralized/monolithic updates and the finite-difference tests.
    """
    top = space.top
    D, B, S = top.D, top.B, top.S
    J = np.zeros((top.num_constraints, top.num_variables))
    row = 0
    for d in range(D):
        J[row, space.iw0(d)] = -1.0
        for b in range(B):
            J[row, space.iw(d, b)] = -1.0
        row += 1
        for b in range(B):
            J[row, space.iw(d, b)] = 1.0
            J[row, space.ip(d, b)] = -shannon_rate_derivative(
                x[space.ip(d, b)], env.gain_dev[d, b], params.bandwidth)
            row += 1
    for b in range(B):
        for d in range(D):
            J[row, space.iw(d, b)] = 1.0
        J[row, space.iy0(b)] = -1.0
        for s in range(S):
            J[row, space.iy(b, s)] = -1.0
        row += 1
        for s in range(S):
            J[row, space.iy(b, s)] = 1.0
            J[row, space.iq(b, s)] = -shannon_rate_derivative(
                x[space.iq(b, s)], env.gain_bs[b, s], params.bandwidth)
            row += 1
    for s in range(S):
        for b in range(B):
            J[row, space.iy(b, s)] = 1.0
        for s2 in range(S):
            if s2 != s:
                J[row, space.iz(s2, s)] = 1.0
        J[row, space.iz0(s)] = -1.0
        for s2 in range(S):
            J[row, space.iz(s, s2)] -= 1.0
        row += 1
    return J


def clipped_jacobian(space: ActionSpace, params: CostParams,
                     x: np.ndarray, env: EnvSample,
                     g: np.ndarray | None = None) -> np.ndarray:
    """Jacobian of h = [g]^+: rows of the raw Jacobian gated by g > 0."""
    if g is None:
        g = constraints(space, params, x, env)
    J = constraint_jacobian(space, params, x, env)
    return J * clipped_gradient_factor(g)[:, None]
