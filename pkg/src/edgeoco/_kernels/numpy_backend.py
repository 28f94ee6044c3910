"""Vectorized numpy implementation of the benchmark-solver kernels.

The benchmark solvers minimize an augmented Lagrangian over a stack of
slots: ``al_eval`` fuses cost, penalty, gradient, and worst violation
into one pass, with a per-slot per-row multiplier array; ``al_hessian``
and ``jac_batch`` supply the curvature for its Newton steps.
``penalty_eval`` is the multiplier-free squared-hinge special case,
kept as a standalone kernel because it is the natural micro-benchmark
and the simplest cross-check against the per-node model. Layout mirrors
``edgeoco.model`` exactly (same block order, same extension seams); the
per-node implementation is the source of truth and the test suite pins
this module against it.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

LN2 = np.log(2.0)


class EnvStack(NamedTuple):
    """Per-slot environment arrays stacked along a leading T axis."""

    demand: np.ndarray      # (T, D)
    gain_dev: np.ndarray    # (T, D, B)
    gain_bs: np.ndarray     # (T, B, S)
    delay_bs: np.ndarray    # (T, B)
    delay_srv: np.ndarray   # (T, S)
    wired: np.ndarray       # (T, S, S)


def stack_envs(env_list) -> EnvStack:
    return EnvStack(
        demand=np.stack([e.demand for e in env_list]),
        gain_dev=np.stack([e.gain_dev for e in env_list]),
        gain_bs=np.stack([e.gain_bs for e in env_list]),
        delay_bs=np.stack([e.cloud_delay_bs for e in env_list]),
        delay_srv=np.stack([e.cloud_delay_srv for e in env_list]),
        wired=np.stack([e.wired_delay for e in env_list]),
    )


def _split(x, D, B, S):
    dev = x[: D * (2 * B + 1)].reshape(D, 2 * B + 1)
    bs = x[D * (2 * B + 1) : D * (2 * B + 1) + B * (2 * S + 1)].reshape(B, 2 * S + 1)
    srv = x[D * (2 * B + 1) + B * (2 * S + 1) :].reshape(S, S + 1)
    W0, W, P = dev[:, 0], dev[:, 1 : 1 + B], dev[:, 1 + B :]
    Y0, Y, Q = bs[:, 0], bs[:, 1 : 1 + S], bs[:, 1 + S :]
    Z0, Z = srv[:, 0], srv[:, 1:]
    return W0, W, P, Y0, Y, Q, Z0, Z


def _si(u, delta):
    inside = u >= delta
    us = np.where(inside, u, delta)
    val = np.where(inside, 1.0 / us, 1.0 / delta + (delta - u) / delta**2)
    der = np.where(inside, -1.0 / us**2, -1.0 / delta**2)
    return val, der


def _si2(u, delta):
    """Second derivative of the extended reciprocal (0 in the linear part)."""
    inside = u >= delta
    us = np.where(inside, u, delta)
    return np.where(inside, 2.0 / us**3, 0.0)


def penalty_eval(x, dims, params, envs: EnvStack, rho: float):
    """Fused objective/penalty/gradient over a slot batch.

    Returns (cost_sum, hinge_sq_sum, grad, max_violation): the un-weighted
    squared-hinge total sum_t sum_m ([g]^+)^2, and the (V,) gradient of
    cost_sum + rho * hinge_sq_sum. The gradient is exact wherever g != 0
    and one-sided at the hinge seams, which the squared form makes C^1.
    """
    D, B, S = dims
    bw, cap_d, cap_s, dlt_d, dlt_s, dlt_q = params
    T = envs.demand.shape[0]
    W0, W, P, Y0, Y, Q, Z0, Z = _split(np.asarray(x, dtype=float), D, B, S)

    rate_dev = bw * np.log2(1.0 + envs.gain_dev * P)          # (T,D,B)
    drate_dev = bw * envs.gain_dev / (LN2 * (1.0 + envs.gain_dev * P))
    rate_bs = bw * np.log2(1.0 + envs.gain_bs * Q)            # (T,B,S)
    drate_bs = bw * envs.gain_bs / (LN2 * (1.0 + envs.gain_bs * Q))

    vproc_d, dproc_d = _si(cap_d - W0, dlt_d)                 # (D,)
    vq_dev, dq_dev = _si(rate_dev - W, dlt_q)                 # (T,D,B)
    vq_bs, dq_bs = _si(rate_bs - Y, dlt_q)                    # (T,B,S)
    zdiag = np.diagonal(Z)
    vproc_s, dproc_s = _si(cap_s - zdiag, dlt_s)              # (S,)

    wired = envs.wired.copy()
    idx = np.arange(S)
    wired[:, idx, idx] = 0.0

    cost_sum = (
        T * float(np.sum(vproc_d))
        + float(np.sum(vq_dev))
        + T * 0.5 * float(np.sum(P * P))
        + float(np.sum(envs.delay_bs @ Y0))
        + float(np.sum(vq_bs))
        + T * 0.5 * float(np.sum(Q * Q))
        + float(np.sum(envs.delay_srv @ Z0))
        + T * float(np.sum(vproc_s))
        + float(np.sum(wired * Z))
    )

    # constraints; flow rows of BSs/servers are env-independent
    g_d0 = envs.demand - (W0 + W.sum(axis=1))                 # (T,D)
    g_rdev = W - rate_dev                                     # (T,D,B)
    b0 = W.sum(axis=0) - Y0 - Y.sum(axis=1)                   # (B,)
    g_rbs = Y - rate_bs                                       # (T,B,S)
    # inflow counts foreign transfers only; outflow counts all, incl. local
    s0 = Y.sum(axis=0) + (Z.sum(axis=0) - zdiag) - Z0 - Z.sum(axis=1)  # (S,)

    r_d0 = np.maximum(0.0, g_d0)
    r_rdev = np.maximum(0.0, g_rdev)
    r_b0 = np.maximum(0.0, b0)
    r_rbs = np.maximum(0.0, g_rbs)
    r_s0 = np.maximum(0.0, s0)

    hinge_sq_sum = (
        float(np.sum(r_d0 * r_d0))
        + float(np.sum(r_rdev * r_rdev))
        + T * float(np.sum(r_b0 * r_b0))
        + float(np.sum(r_rbs * r_rbs))
        + T * float(np.sum(r_s0 * r_s0))
    )
    max_violation = max(
        float(np.max(r_d0, initial=0.0)),
        float(np.max(r_rdev, initial=0.0)),
        float(np.max(r_b0, initial=0.0)),
        float(np.max(r_rbs, initial=0.0)),
        float(np.max(r_s0, initial=0.0)),
    )

    # d(rho * hinge_sq)/dg per row instance, pre-summed over slots
    a_d0 = 2.0 * r_d0.sum(axis=0)                             # (D,)
    a_rdev = 2.0 * r_rdev.sum(axis=0)                         # (D,B)
    a_b0 = 2.0 * T * r_b0                                     # (B,)
    a_rbs = 2.0 * r_rbs.sum(axis=0)                           # (B,S)
    a_s0 = 2.0 * T * r_s0                                     # (S,)

    gW0 = -T * dproc_d - rho * a_d0
    gW = (-dq_dev.sum(axis=0)
          + rho * (-a_d0[:, None] + a_rdev + a_b0[None, :]))
    gP = ((dq_dev * drate_dev).sum(axis=0) + T * P
          - rho * 2.0 * (r_rdev * drate_dev).sum(axis=0))
    gY0 = envs.delay_bs.sum(axis=0) - rho * a_b0
    gY = (-dq_bs.sum(axis=0)
          + rho * (-a_b0[:, None] + a_rbs + a_s0[None, :]))
    gQ = ((dq_bs * drate_bs).sum(axis=0) + T * Q
          - rho * 2.0 * (r_rbs * drate_bs).sum(axis=0))
    gZ0 = envs.delay_srv.sum(axis=0) - rho * a_s0
    gZ = wired.sum(axis=0) + rho * (a_s0[None, :] - a_s0[:, None])
    gZ[idx, idx] = -T * dproc_s - rho * a_s0

    grad = np.concatenate([
        np.concatenate([gW0[:, None], gW, gP], axis=1).ravel(),
        np.concatenate([gY0[:, None], gY, gQ], axis=1).ravel(),
        np.concatenate([gZ0[:, None], gZ], axis=1).ravel(),
    ])
    return cost_sum, hinge_sq_sum, grad, max_violation


def _row_blocks(D, B, S):
    """Global constraint-row indices of each row family."""
    dev = np.arange(D) * (B + 1)
    rdev = dev[:, None] + 1 + np.arange(B)[None, :]
    bs_off = D * (B + 1)
    bs = bs_off + np.arange(B) * (S + 1)
    rbs = bs[:, None] + 1 + np.arange(S)[None, :]
    srv = bs_off + B * (S + 1) + np.arange(S)
    return dev, rdev, bs, rbs, srv


def al_eval(x, dims, params, envs: EnvStack, rho: float, mu: np.ndarray):
    """Fused augmented-Lagrangian evaluation over a slot batch.

    With s_tm = max(0, mu_tm + rho * g^t_m(x)), returns
    (cost_sum, al_penalty, grad, max_violation) where

        al_penalty = sum_tm (s_tm^2 - mu_tm^2) / (2 rho),
        grad       = d/dx [ cost_sum + al_penalty ]
                   = sum_t grad f^t + sum_tm s_tm grad g^t_m.

    ``mu`` is (T, M) in the global constraint-row order. The piecewise
    form is C^1 in x; the seams sit at mu + rho g = 0, a distance mu/rho
    on the feasible side of each constraint, so a multiplier-method
    solution point is interior to a smooth piece.
    """
    D, B, S = dims
    bw, cap_d, cap_s, dlt_d, dlt_s, dlt_q = params
    T = envs.demand.shape[0]
    W0, W, P, Y0, Y, Q, Z0, Z = _split(np.asarray(x, dtype=float), D, B, S)
    mu = np.asarray(mu, dtype=float)
    i_d0, i_rdev, i_b0, i_rbs, i_s0 = _row_blocks(D, B, S)

    rate_dev = bw * np.log2(1.0 + envs.gain_dev * P)          # (T,D,B)
    drate_dev = bw * envs.gain_dev / (LN2 * (1.0 + envs.gain_dev * P))
    rate_bs = bw * np.log2(1.0 + envs.gain_bs * Q)            # (T,B,S)
    drate_bs = bw * envs.gain_bs / (LN2 * (1.0 + envs.gain_bs * Q))

    vproc_d, dproc_d = _si(cap_d - W0, dlt_d)                 # (D,)
    vq_dev, dq_dev = _si(rate_dev - W, dlt_q)                 # (T,D,B)
    vq_bs, dq_bs = _si(rate_bs - Y, dlt_q)                    # (T,B,S)
    zdiag = np.diagonal(Z)
    vproc_s, dproc_s = _si(cap_s - zdiag, dlt_s)              # (S,)

    wired = envs.wired.copy()
    idx = np.arange(S)
    wired[:, idx, idx] = 0.0

    cost_sum = (
        T * float(np.sum(vproc_d))
        + float(np.sum(vq_dev))
        + T * 0.5 * float(np.sum(P * P))
        + float(np.sum(envs.delay_bs @ Y0))
        + float(np.sum(vq_bs))
        + T * 0.5 * float(np.sum(Q * Q))
        + float(np.sum(envs.delay_srv @ Z0))
        + T * float(np.sum(vproc_s))
        + float(np.sum(wired * Z))
    )

    g_d0 = envs.demand - (W0 + W.sum(axis=1))                 # (T,D)
    g_rdev = W - rate_dev                                     # (T,D,B)
    b0 = W.sum(axis=0) - Y0 - Y.sum(axis=1)                   # (B,)
    g_rbs = Y - rate_bs                                       # (T,B,S)
    s0 = Y.sum(axis=0) + (Z.sum(axis=0) - zdiag) - Z0 - Z.sum(axis=1)  # (S,)

    # shifted multipliers; env-independent rows still carry per-slot mu
    s_d0 = np.maximum(0.0, mu[:, i_d0] + rho * g_d0)          # (T,D)
    s_rdev = np.maximum(0.0, mu[:, i_rdev] + rho * g_rdev)    # (T,D,B)
    s_b0 = np.maximum(0.0, mu[:, i_b0] + rho * b0[None, :])   # (T,B)
    s_rbs = np.maximum(0.0, mu[:, i_rbs] + rho * g_rbs)       # (T,B,S)
    s_s0 = np.maximum(0.0, mu[:, i_s0] + rho * s0[None, :])   # (T,S)

    al_penalty = (
        float(np.sum(s_d0 * s_d0 - mu[:, i_d0] ** 2))
        + float(np.sum(s_rdev * s_rdev - mu[:, i_rdev] ** 2))
        + float(np.sum(s_b0 * s_b0 - mu[:, i_b0] ** 2))
        + float(np.sum(s_rbs * s_rbs - mu[:, i_rbs] ** 2))
        + float(np.sum(s_s0 * s_s0 - mu[:, i_s0] ** 2))
    ) / (2.0 * rho)
    max_violation = max(
        float(np.max(g_d0, initial=0.0)),
        float(np.max(g_rdev, initial=0.0)),
        float(np.max(b0, initial=0.0)),
        float(np.max(g_rbs, initial=0.0)),
        float(np.max(s0, initial=0.0)),
        0.0,
    )

    a_d0 = s_d0.sum(axis=0)                                   # (D,)
    a_rdev = s_rdev.sum(axis=0)                               # (D,B)
    a_b0 = s_b0.sum(axis=0)                                   # (B,)
    a_rbs = s_rbs.sum(axis=0)                                 # (B,S)
    a_s0 = s_s0.sum(axis=0)                                   # (S,)

    gW0 = -T * dproc_d - a_d0
    gW = (-dq_dev.sum(axis=0)
          - a_d0[:, None] + a_rdev + a_b0[None, :])
    gP = ((dq_dev * drate_dev).sum(axis=0) + T * P
          - (s_rdev * drate_dev).sum(axis=0))
    gY0 = envs.delay_bs.sum(axis=0) - a_b0
    gY = (-dq_bs.sum(axis=0)
          - a_b0[:, None] + a_rbs + a_s0[None, :])
    gQ = ((dq_bs * drate_bs).sum(axis=0) + T * Q
          - (s_rbs * drate_bs).sum(axis=0))
    gZ0 = envs.delay_srv.sum(axis=0) - a_s0
    gZ = wired.sum(axis=0) + (a_s0[None, :] - a_s0[:, None])
    gZ[idx, idx] = -T * dproc_s - a_s0

    grad = np.concatenate([
        np.concatenate([gW0[:, None], gW, gP], axis=1).ravel(),
        np.concatenate([gY0[:, None], gY, gQ], axis=1).ravel(),
        np.concatenate([gZ0[:, None], gZ], axis=1).ravel(),
    ])
    return cost_sum, al_penalty, grad, max_violation


def jac_batch(x, dims, params, envs: EnvStack) -> np.ndarray:
    """Per-slot constraint Jacobians, (T, M, V), global row order."""
    D, B, S = dims
    bw = params[0]
    T = envs.demand.shape[0]
    dev_len, bs_len, srv_len = 2 * B + 1, 2 * S + 1, S + 1
    bs_base = D * dev_len
    srv_base = bs_base + B * bs_len
    V = srv_base + S * srv_len
    M = D * (B + 1) + B * (S + 1) + S
    _, _, P, _, _, Q, _, _ = _split(np.asarray(x, dtype=float), D, B, S)
    drate_dev = bw * envs.gain_dev / (LN2 * (1.0 + envs.gain_dev * P))
    drate_bs = bw * envs.gain_bs / (LN2 * (1.0 + envs.gain_bs * Q))

    J = np.zeros((T, M, V))
    row = 0
    for d in range(D):
        o = d * dev_len
        J[:, row, o] = -1.0
        J[:, row, o + 1 : o + 1 + B] = -1.0
        row += 1
        for b in range(B):
            J[:, row, o + 1 + b] = 1.0
            J[:, row, o + 1 + B + b] = -drate_dev[:, d, b]
            row += 1
    for b in range(B):
        o = bs_base + b * bs_len
        for d in range(D):
            J[:, row, d * dev_len + 1 + b] = 1.0
        J[:, row, o] = -1.0
        J[:, row, o + 1 : o + 1 + S] = -1.0
        row += 1
        for s in range(S):
            J[:, row, o + 1 + s] = 1.0
            J[:, row, o + 1 + S + s] = -drate_bs[:, b, s]
            row += 1
    for s in range(S):
        o = srv_base + s * srv_len
        for b in range(B):
            J[:, row, bs_base + b * bs_len + 1 + s] = 1.0
        for s2 in range(S):
            if s2 != s:
                J[:, row, srv_base + s2 * srv_len + 1 + s] = 1.0
        J[:, row, o] = -1.0
        J[:, row, o + 1 : o + 1 + S] -= 1.0
        row += 1
    return J


def al_hessian(x, dims, params, envs: EnvStack, rho: float,
               mu: np.ndarray) -> np.ndarray:
    """Hessian of cost_sum + al_penalty, (V, V).

    Piecewise exact: the extended-reciprocal seams and the multiplier
    seams (mu + rho g = 0) carry jump discontinuities in curvature, so
    this is the Hessian of the smooth piece the point sits in (one-sided
    at seams). That is exactly what a line-searched Newton method needs.
    """
    D, B, S = dims
    bw, cap_d, cap_s, dlt_d, dlt_s, dlt_q = params
    T = envs.demand.shape[0]
    dev_len, bs_len, srv_len = 2 * B + 1, 2 * S + 1, S + 1
    bs_base = D * dev_len
    srv_base = bs_base + B * bs_len
    V = srv_base + S * srv_len
    W0, W, P, Y0, Y, Q, Z0, Z = _split(np.asarray(x, dtype=float), D, B, S)
    mu = np.asarray(mu, dtype=float)

    rate_dev = bw * np.log2(1.0 + envs.gain_dev * P)
    drate_dev = bw * envs.gain_dev / (LN2 * (1.0 + envs.gain_dev * P))
    ddr_dev = -bw * envs.gain_dev**2 / (LN2 * (1.0 + envs.gain_dev * P) ** 2)
    rate_bs = bw * np.log2(1.0 + envs.gain_bs * Q)
    drate_bs = bw * envs.gain_bs / (LN2 * (1.0 + envs.gain_bs * Q))
    ddr_bs = -bw * envs.gain_bs**2 / (LN2 * (1.0 + envs.gain_bs * Q) ** 2)

    H = np.zeros((V, V))

    # cost curvature (second derivatives of the per-node costs)
    for d in range(D):
        o = d * dev_len
        H[o, o] += T * float(_si2(cap_d - W0[d], dlt_d))
        for b in range(B):
            u = rate_dev[:, d, b] - W[d, b]
            s2v = _si2(u, dlt_q)
            _, s1v = _si(u, dlt_q)
            dr = drate_dev[:, d, b]
            iw, ip = o + 1 + b, o + 1 + B + b
            H[iw, iw] += float(np.sum(s2v))
            cross = -float(np.sum(s2v * dr))
            H[iw, ip] += cross
            H[ip, iw] += cross
            H[ip, ip] += float(np.sum(s2v * dr * dr)
                               + np.sum(s1v * ddr_dev[:, d, b])) + T
    for b in range(B):
        o = bs_base + b * bs_len
        for s in range(S):
            u = rate_bs[:, b, s] - Y[b, s]
            s2v = _si2(u, dlt_q)
            _, s1v = _si(u, dlt_q)
            dr = drate_bs[:, b, s]
            iy, iq = o + 1 + s, o + 1 + S + s
            H[iy, iy] += float(np.sum(s2v))
            cross = -float(np.sum(s2v * dr))
            H[iy, iq] += cross
            H[iq, iy] += cross
            H[iq, iq] += float(np.sum(s2v * dr * dr)
                               + np.sum(s1v * ddr_bs[:, b, s])) + T
    for s in range(S):
        o = srv_base + s * srv_len
        iz = o + 1 + s
        H[iz, iz] += T * float(_si2(cap_s - Z[s, s], dlt_s))

    # penalty curvature: rho sum 1{s>0} J J^T + sum s Hess g
    gT = constraints_batch(x, dims, params, envs)
    smul = np.maximum(0.0, mu + rho * gT)
    mask = (smul > 0.0).astype(float)
    J = jac_batch(x, dims, params, envs)
    H += rho * np.einsum("tm,tmi,tmj->ij", mask, J, J)
    # Hess g is nonzero only for rate rows: a single (p, p) entry -rate''
    row = 0
    for d in range(D):
        row += 1
        for b in range(B):
            ip = d * dev_len + 1 + B + b
            H[ip, ip] += float(np.sum(smul[:, row] * (-ddr_dev[:, d, b])))
            row += 1
    for b in range(B):
        row += 1
        for s in range(S):
            iq = bs_base + b * bs_len + 1 + S + s
            H[iq, iq] += float(np.sum(smul[:, row] * (-ddr_bs[:, b, s])))
            row += 1
    return H


def penalty_hessian(x, dims, params, envs: EnvStack, rho: float) -> np.ndarray:
    """Hessian of cost_sum + rho * hinge_sq_sum, (V, V).

    The squared hinge is the zero-multiplier augmented Lagrangian at
    twice the weight: rho [g]^+ ^2 = max(0, 0 + 2 rho g)^2 / (2 * 2 rho).
    """
    D, B, S = dims
    T = envs.demand.shape[0]
    M = D * (B + 1) + B * (S + 1) + S
    return al_hessian(x, dims, params, envs, 2.0 * rho, np.zeros((T, M)))


def cost_batch(x, dims, params, envs: EnvStack) -> np.ndarray:
    """Per-slot costs f^t(x) for a fixed action, (T,)."""
    D, B, S = dims
    bw, cap_d, cap_s, dlt_d, dlt_s, dlt_q = params
    W0, W, P, Y0, Y, Q, Z0, Z = _split(np.asarray(x, dtype=float), D, B, S)
    rate_dev = bw * np.log2(1.0 + envs.gain_dev * P)
    rate_bs = bw * np.log2(1.0 + envs.gain_bs * Q)
    vproc_d, _ = _si(cap_d - W0, dlt_d)
    vq_dev, _ = _si(rate_dev - W, dlt_q)
    vq_bs, _ = _si(rate_bs - Y, dlt_q)
    zdiag = np.diagonal(Z)
    vproc_s, _ = _si(cap_s - zdiag, dlt_s)
    wired = envs.wired.copy()
    idx = np.arange(S)
    wired[:, idx, idx] = 0.0
    const = (float(np.sum(vproc_d)) + 0.5 * float(np.sum(P * P))
             + 0.5 * float(np.sum(Q * Q)) + float(np.sum(vproc_s)))
    return (const
            + vq_dev.sum(axis=(1, 2))
            + envs.delay_bs @ Y0
            + vq_bs.sum(axis=(1, 2))
            + envs.delay_srv @ Z0
            + (wired * Z).sum(axis=(1, 2)))


def constraints_batch(x, dims, params, envs: EnvStack) -> np.ndarray:
    """Constraint values g^t(x) for a fixed action, (T, M), global row order."""
    D, B, S = dims
    bw = params[0]
    T = envs.demand.shape[0]
    W0, W, P, Y0, Y, Q, Z0, Z = _split(np.asarray(x, dtype=float), D, B, S)
    rate_dev = bw * np.log2(1.0 + envs.gain_dev * P)
    rate_bs = bw * np.log2(1.0 + envs.gain_bs * Q)
    g_d0 = envs.demand - (W0 + W.sum(axis=1))
    g_rdev = W - rate_dev
    zdiag = np.diagonal(Z)
    b0 = W.sum(axis=0) - Y0 - Y.sum(axis=1)
    s0 = Y.sum(axis=0) + (Z.sum(axis=0) - zdiag) - Z0 - Z.sum(axis=1)
    g_rbs = Y - rate_bs
    parts = []
    for d in range(D):
        parts.append(g_d0[:, d : d + 1])
        parts.append(g_rdev[:, d, :])
    for b in range(B):
        parts.append(np.broadcast_to(b0[b], (T, 1)))
        parts.append(g_rbs[:, b, :])
    parts.append(np.broadcast_to(s0, (T, S)))
    return np.concatenate(parts, axis=1)
