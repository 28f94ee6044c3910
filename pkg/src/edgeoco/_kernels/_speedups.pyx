# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of numpy_backend.penalty_eval and numpy_backend.al_eval.

Same math, explicit loops: for the one-slot solves that dominate the
dynamic benchmark the array machinery costs more than the arithmetic, so
this version wins roughly an order of magnitude there.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, log2

cnp.import_array()

cdef double LN2 = log(2.0)


cdef inline void si(double u, double delta, double *val, double *der) noexcept nogil:
    if u >= delta:
        val[0] = 1.0 / u
        der[0] = -1.0 / (u * u)
    else:
        val[0] = 1.0 / delta + (delta - u) / (delta * delta)
        der[0] = -1.0 / (delta * delta)


def penalty_eval_raw(double[::1] x, int D, int B, int S,
                     double bw, double cap_d, double cap_s,
                     double dlt_d, double dlt_s, double dlt_q,
                     double[:, ::1] demand, double[:, :, ::1] gain_dev,
                     double[:, :, ::1] gain_bs, double[:, ::1] delay_bs,
                     double[:, ::1] delay_srv, double[:, :, ::1] wired,
                     double rho):
    cdef int T = demand.shape[0]
    cdef int dev_len = 2 * B + 1
    cdef int bs_len = 2 * S + 1
    cdef int srv_len = S + 1
    cdef int bs_base = D * dev_len
    cdef int srv_base = bs_base + B * bs_len

    grad_arr = np.zeros(x.shape[0])
    cdef double[::1] g = grad_arr

    cdef double cost = 0.0, viol = 0.0, maxv = 0.0
    cdef double v = 0.0, dv = 0.0
    cdef double a, p, w, q, y, rate, dr, val, inflow, out, pen
    cdef double tT = <double> T
    cdef int t, d, b, s, s2, o, ob

    # env-independent pieces: processing queues, quadratic power prices,
    # and the BS/server flow rows (their terms do not move between slots)
    for d in range(D):
        o = d * dev_len
        si(cap_d - x[o], dlt_d, &v, &dv)
        cost += tT * v
        g[o] -= tT * dv
        for b in range(B):
            p = x[o + 1 + B + b]
            cost += tT * 0.5 * p * p
            g[o + 1 + B + b] += tT * p
    for b in range(B):
        o = bs_base + b * bs_len
        for s in range(S):
            q = x[o + 1 + S + s]
            cost += tT * 0.5 * q * q
            g[o + 1 + S + s] += tT * q
        inflow = 0.0
        for d in range(D):
            inflow += x[d * dev_len + 1 + b]
        val = inflow - x[o]
        for s in range(S):
            val -= x[o + 1 + s]
        if val > 0.0:
            viol += tT * val * val
            if val > maxv:
                maxv = val
            pen = tT * 2.0 * rho * val
            for d in range(D):
                g[d * dev_len + 1 + b] += pen
            g[o] -= pen
            for s in range(S):
                g[o + 1 + s] -= pen
    for s in range(S):
        o = srv_base + s * srv_len
        si(cap_s - x[o + 1 + s], dlt_s, &v, &dv)
        cost += tT * v
        g[o + 1 + s] -= tT * dv
        inflow = 0.0
        for b in range(B):
            inflow += x[bs_base + b * bs_len + 1 + s]
        for s2 in range(S):
            if s2 != s:
                inflow += x[srv_base + s2 * srv_len + 1 + s]
        out = x[o]
        for s2 in range(S):
            out += x[o + 1 + s2]
        val = inflow - out
        if val > 0.0:
            viol += tT * val * val
            if val > maxv:
                maxv = val
            pen = tT * 2.0 * rho * val
            for b in range(B):
                g[bs_base + b * bs_len + 1 + s] += pen
            for s2 in range(S):
                if s2 != s:
                    g[srv_base + s2 * srv_len + 1 + s] += pen
            g[o] -= pen
            for s2 in range(S):
                g[o + 1 + s2] -= pen

    # per-slot pieces
    for t in range(T):
        for d in range(D):
            o = d * dev_len
            val = demand[t, d] - x[o]
            for b in range(B):
                val -= x[o + 1 + b]
            if val > 0.0:
                viol += val * val
                if val > maxv:
                    maxv = val
                pen = 2.0 * rho * val
                g[o] -= pen
                for b in range(B):
                    g[o + 1 + b] -= pen
            for b in range(B):
                a = gain_dev[t, d, b]
                p = x[o + 1 + B + b]
                w = x[o + 1 + b]
                rate = bw * log2(1.0 + a * p)
                dr = bw * a / (LN2 * (1.0 + a * p))
                si(rate - w, dlt_q, &v, &dv)
                cost += v
                g[o + 1 + b] -= dv
                g[o + 1 + B + b] += dv * dr
                val = w - rate
                if val > 0.0:
                    viol += val * val
                    if val > maxv:
                        maxv = val
                    pen = 2.0 * rho * val
                    g[o + 1 + b] += pen
                    g[o + 1 + B + b] -= pen * dr
        for b in range(B):
            o = bs_base + b * bs_len
            cost += delay_bs[t, b] * x[o]
            g[o] += delay_bs[t, b]
            for s in range(S):
                a = gain_bs[t, b, s]
                q = x[o + 1 + S + s]
                y = x[o + 1 + s]
                rate = bw * log2(1.0 + a * q)
                dr = bw * a / (LN2 * (1.0 + a * q))
                si(rate - y, dlt_q, &v, &dv)
                cost += v
                g[o + 1 + s] -= dv
                g[o + 1 + S + s] += dv * dr
                val = y - rate
                if val > 0.0:
                    viol += val * val
                    if val > maxv:
                        maxv = val
                    pen = 2.0 * rho * val
                    g[o + 1 + s] += pen
                    g[o + 1 + S + s] -= pen * dr
        for s in range(S):
            o = srv_base + s * srv_len
            cost += delay_srv[t, s] * x[o]
            g[o] += delay_srv[t, s]
            for s2 in range(S):
                if s2 != s:
                    cost += wired[t, s, s2] * x[o + 1 + s2]
                    g[o + 1 + s2] += wired[t, s, s2]

    return cost, viol, grad_arr, maxv


def al_eval_raw(double[::1] x, int D, int B, int S,
                double bw, double cap_d, double cap_s,
                double dlt_d, double dlt_s, double dlt_q,
                double[:, ::1] demand, double[:, :, ::1] gain_dev,
                double[:, :, ::1] gain_bs, double[:, ::1] delay_bs,
                double[:, ::1] delay_srv, double[:, :, ::1] wired,
                double rho, double[:, ::1] mu):
    """Augmented-Lagrangian value/gradient with per-slot multipliers.

    With sm = max(0, mu[t, m] + rho * g^t_m), the penalty term is
    sum (sm^2 - mu^2) / (2 rho) and each active row adds sm * grad g to
    the gradient. ``mu`` is (T, M) in the global constraint-row order.
    """
    cdef int T = demand.shape[0]
    cdef int dev_len = 2 * B + 1
    cdef int bs_len = 2 * S + 1
    cdef int srv_len = S + 1
    cdef int bs_base = D * dev_len
    cdef int srv_base = bs_base + B * bs_len
    cdef int bs_row = D * (B + 1)
    cdef int srv_row = bs_row + B * (S + 1)

    grad_arr = np.zeros(x.shape[0])
    cdef double[::1] g = grad_arr

    cdef double cost = 0.0, acc = 0.0, maxv = 0.0
    cdef double v = 0.0, dv = 0.0
    cdef double a, p, w, q, y, rate, dr, val, inflow, out, sm, mv, wsum
    cdef double tT = <double> T
    cdef int t, d, b, s, s2, o, row

    # env-independent pieces: processing queues, quadratic power prices,
    # and the BS/server flow rows (constraint value fixed across slots,
    # multiplier not)
    for d in range(D):
        o = d * dev_len
        si(cap_d - x[o], dlt_d, &v, &dv)
        cost += tT * v
        g[o] -= tT * dv
        for b in range(B):
            p = x[o + 1 + B + b]
            cost += tT * 0.5 * p * p
            g[o + 1 + B + b] += tT * p
    for b in range(B):
        o = bs_base + b * bs_len
        row = bs_row + b * (S + 1)
        for s in range(S):
            q = x[o + 1 + S + s]
            cost += tT * 0.5 * q * q
            g[o + 1 + S + s] += tT * q
        inflow = 0.0
        for d in range(D):
            inflow += x[d * dev_len + 1 + b]
        val = inflow - x[o]
        for s in range(S):
            val -= x[o + 1 + s]
        if val > maxv:
            maxv = val
        wsum = 0.0
        for t in range(T):
            mv = mu[t, row]
            acc -= mv * mv
            sm = mv + rho * val
            if sm > 0.0:
                acc += sm * sm
                wsum += sm
        if wsum != 0.0:
            for d in range(D):
                g[d * dev_len + 1 + b] += wsum
            g[o] -= wsum
            for s in range(S):
                g[o + 1 + s] -= wsum
    for s in range(S):
        o = srv_base + s * srv_len
        row = srv_row + s
        si(cap_s - x[o + 1 + s], dlt_s, &v, &dv)
        cost += tT * v
        g[o + 1 + s] -= tT * dv
        inflow = 0.0
        for b in range(B):
            inflow += x[bs_base + b * bs_len + 1 + s]
        for s2 in range(S):
            if s2 != s:
                inflow += x[srv_base + s2 * srv_len + 1 + s]
        out = x[o]
        for s2 in range(S):
            out += x[o + 1 + s2]
        val = inflow - out
        if val > maxv:
            maxv = val
        wsum = 0.0
        for t in range(T):
            mv = mu[t, row]
            acc -= mv * mv
            sm = mv + rho * val
            if sm > 0.0:
                acc += sm * sm
                wsum += sm
        if wsum != 0.0:
            for b in range(B):
                g[bs_base + b * bs_len + 1 + s] += wsum
            for s2 in range(S):
                if s2 != s:
                    g[srv_base + s2 * srv_len + 1 + s] += wsum
            g[o] -= wsum
            for s2 in range(S):
                g[o + 1 + s2] -= wsum

    # per-slot pieces
    for t in range(T):
        for d in range(D):
            o = d * dev_len
            row = d * (B + 1)
            val = demand[t, d] - x[o]
            for b in range(B):
                val -= x[o + 1 + b]
            if val > maxv:
                maxv = val
            mv = mu[t, row]
            acc -= mv * mv
            sm = mv + rho * val
            if sm > 0.0:
                acc += sm * sm
                g[o] -= sm
                for b in range(B):
                    g[o + 1 + b] -= sm
            for b in range(B):
                a = gain_dev[t, d, b]
                p = x[o + 1 + B + b]
                w = x[o + 1 + b]
                rate = bw * log2(1.0 + a * p)
                dr = bw * a / (LN2 * (1.0 + a * p))
                si(rate - w, dlt_q, &v, &dv)
                cost += v
                g[o + 1 + b] -= dv
                g[o + 1 + B + b] += dv * dr
                val = w - rate
                if val > maxv:
                    maxv = val
                mv = mu[t, row + 1 + b]
                acc -= mv * mv
                sm = mv + rho * val
                if sm > 0.0:
                    acc += sm * sm
                    g[o + 1 + b] += sm
                    g[o + 1 + B + b] -= sm * dr
        for b in range(B):
            o = bs_base + b * bs_len
            row = bs_row + b * (S + 1)
            cost += delay_bs[t, b] * x[o]
            g[o] += delay_bs[t, b]
            for s in range(S):
                a = gain_bs[t, b, s]
                q = x[o + 1 + S + s]
                y = x[o + 1 + s]
                rate = bw * log2(1.0 + a * q)
                dr = bw * a / (LN2 * (1.0 + a * q))
                si(rate - y, dlt_q, &v, &dv)
                cost += v
                g[o + 1 + s] -= dv
                g[o + 1 + S + s] += dv * dr
                val = y - rate
                if val > maxv:
                    maxv = val
                mv = mu[t, row + 1 + s]
                acc -= mv * mv
                sm = mv + rho * val
                if sm > 0.0:
                    acc += sm * sm
                    g[o + 1 + s] += sm
                    g[o + 1 + S + s] -= sm * dr
        for s in range(S):
            o = srv_base + s * srv_len
            cost += delay_srv[t, s] * x[o]
            g[o] += delay_srv[t, s]
            for s2 in range(S):
                if s2 != s:
                    cost += wired[t, s, s2] * x[o + 1 + s2]
                    g[o + 1 + s2] += wired[t, s, s2]

    return cost, acc / (2.0 * rho), grad_arr, maxv
