"""Run records and performance accounting: regret against offline
comparators and accumulated constraint violation (fit).

Everything is prefix-friendly: one horizon-T_max run yields the whole
curve over T because costs and violations enter through cumulative sums,
and the dynamic comparator is per-slot. The static comparator is the one
quantity that must be re-solved per prefix; callers pass the per-prefix
solutions in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import cost_batch, stack_envs
from .model import ActionSpace, CostParams, clip


@dataclass
class RunRecord:
    """Per-slot trajectory of one algorithm run.

    Row t-1 holds slot t's played action x^t, realized cost f^t(x^t), raw
    constraint values g^t(x^t), their positive parts h^t, and the
    multipliers lambda^t = h^t / (eta * sigma) set during the slot.
    """

    actions: np.ndarray            # (T, V)
    costs: np.ndarray              # (T,)
    g: np.ndarray                  # (T, M)
    h: np.ndarray                  # (T, M)
    lam: np.ndarray                # (T, M)
    m1_counts: np.ndarray = field(default=None)  # (T,) messages sent per slot
    m2_counts: np.ndarray = field(default=None)

    def __post_init__(self):
        T = self.costs.shape[0]
        if self.m1_counts is None:
            self.m1_counts = np.zeros(T, dtype=int)
        if self.m2_counts is None:
            self.m2_counts = np.zeros(T, dtype=int)

    @property
    def horizon(self) -> int:
        return self.costs.shape[0]

    def check_prefix(self, upto: int | None) -> int:
        T = self.horizon if upto is None else int(upto)
        if not 1 <= T <= self.horizon:
            raise ValueError(f"prefix {upto} outside 1..{self.horizon}")
        return T


class RecordBuilder:
    """Incremental collector used by the simulation loops."""

    def __init__(self):
        self._rows = {k: [] for k in ("x", "f", "g", "h", "lam", "m1", "m2")}

    def add(self, x, f, g, h, lam, m1=0, m2=0):
        r = self._rows
        r["x"].append(np.array(x, dtype=float))
        r["f"].append(float(f))
        r["g"].append(np.array(g, dtype=float))
        r["h"].append(np.array(h, dtype=float))
        r["lam"].append(np.array(lam, dtype=float))
        r["m1"].append(int(m1))
        r["m2"].append(int(m2))

    def build(self) -> RunRecord:
        r = self._rows
        return RunRecord(
            actions=np.vstack(r["x"]),
            costs=np.asarray(r["f"]),
            g=np.vstack(r["g"]),
            h=np.vstack(r["h"]),
            lam=np.vstack(r["lam"]),
            m1_counts=np.asarray(r["m1"], dtype=int),
            m2_counts=np.asarray(r["m2"], dtype=int),
        )


# --------------------------------------------------------------------------
# comparator cost evaluation
# --------------------------------------------------------------------------

def comparator_costs(space: ActionSpace, params: CostParams,
                     x: np.ndarray, envs) -> np.ndarray:
    """f^t(x) for a fixed action over a slot sequence, (T,)."""
    stack = envs if hasattr(envs, "demand") and hasattr(envs, "wired") else stack_envs(envs)
    dims = (space.top.D, space.top.B, space.top.S)
    ptup = (params.bandwidth, params.cap_device, params.cap_server,
            params.delta_device, params.delta_server, params.delta_queue)
    return cost_batch(x, dims, ptup, stack)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def fit(record: RunRecord, upto: int | None = None) -> float:
    """Total accumulated violation sum_{t<=T} sum_m [g^t_m]^+.

    Recomputed from the stored raw constraints, not from the stored h, so
    the two columns cross-check each other in the test suite.
    """
    T = record.check_prefix(upto)
    return float(np.sum(clip(record.g[:T])))


def static_regret(record: RunRecord, comp_costs: np.ndarray,
                  upto: int | None = None) -> float:
    """sum f^t(x^t) - sum f^t(x*) for the best fixed feasible comparator.

    ``comp_costs`` are the comparator's per-slot costs over (at least) the
    prefix; the comparator itself must come from a prefix-T solve.
    """
    T = record.check_prefix(upto)
    if comp_costs.shape[0] < T:
        raise ValueError("comparator cost series shorter than the prefix")
    return float(np.sum(record.costs[:T]) - np.sum(comp_costs[:T]))


def dynamic_regret(record: RunRecord, dyn_costs: np.ndarray,
                   upto: int | None = None) -> float:
    """sum f^t(x^t) - sum f^t(x*_t) against the per-slot minimizers."""
    T = record.check_prefix(upto)
    if dyn_costs.shape[0] < T:
        raise ValueError("dynamic comparator series shorter than the prefix")
    return float(np.sum(record.costs[:T]) - np.sum(dyn_costs[:T]))


def cost_gap(static_costs: np.ndarray, dyn_costs: np.ndarray, T: int) -> float:
    """(1/T) sum_{t<=T} (f^t(x*) - f^t(x*_t)): how much the best fixed
    action loses to the per-slot optimum; nonnegative up to solver slack."""
    if min(static_costs.shape[0], dyn_costs.shape[0]) < T:
        raise ValueError("comparator series shorter than T")
    return float(np.sum(static_costs[:T] - dyn_costs[:T]) / T)
