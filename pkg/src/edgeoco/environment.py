"""Per-slot environment: task demands, channel gains, forwarding delays.

Every random quantity for slot t is drawn from a generator seeded with
(seed, t), so ``sample_env`` is a pure function of its arguments: slots can
be queried in any order, re-queried, or skipped, and two processes with the
same config see the same realization. Demands come either from a uniform
range or from a CSV trace (one row per slot, one column per device).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .topology import Topology

DEF_GAIN_RANGE = (8.0, 15.0)
DEF_DELAY_RANGE = (3.0, 10.0)
DEF_DEMAND_RANGE = (1.0, 10.0)


@dataclass(frozen=True)
class EnvConfig:
    seed: int = 0
    gain_range: tuple[float, float] = DEF_GAIN_RANGE
    delay_range: tuple[float, float] = DEF_DELAY_RANGE
    demand_range: tuple[float, float] = DEF_DEMAND_RANGE
    trace: np.ndarray | None = None  # (T_trace, D); overrides demand_range

    def __post_init__(self):
        for lo, hi in (self.gain_range, self.delay_range, self.demand_range):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad interval [{lo}, {hi}]")
        if self.gain_range[0] <= 0:
            raise ValueError("channel gains must be positive")
        if self.delay_range[0] < 0 or self.demand_range[0] < 0:
            raise ValueError("delays and demands must be nonnegative")
        if self.trace is not None:
            tr = np.asarray(self.trace, dtype=float)
            if tr.ndim != 2 or tr.size == 0:
                raise ValueError("trace must be a nonempty 2-d array")
            if not np.all(np.isfinite(tr)):
                raise ValueError("trace contains non-finite entries")
            object.__setattr__(self, "trace", tr)


@dataclass(frozen=True)
class EnvSample:
    """Realized environment for one slot."""

    t: int
    demand: np.ndarray          # (D,) tasks arriving at each device
    gain_dev: np.ndarray        # (D, B) device -> BS channel gains
    gain_bs: np.ndarray         # (B, S) BS -> server channel gains
    cloud_delay_bs: np.ndarray  # (B,) per-task delay of the BS -> cloud path
    cloud_delay_srv: np.ndarray # (S,) per-task delay of the server -> cloud path
    wired_delay: np.ndarray     # (S, S) server -> server per-task delay; diagonal unused

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.demand, self.gain_dev, self.gain_bs,
                self.cloud_delay_bs, self.cloud_delay_srv, self.wired_delay)


def sample_env(cfg: EnvConfig, top: Topology, t: int) -> EnvSample:
    """Draw slot t's environment. Slots are 1-indexed."""
    if t < 1:
        raise ValueError("slots are 1-indexed")
    rng = np.random.default_rng([cfg.seed, t])
    D, B, S = top.D, top.B, top.S
    # draw order is part of the determinism contract; demand is drawn even
    # when a trace overrides it so gains/delays do not shift between modes
    demand = rng.uniform(*cfg.demand_range, size=D)
    gain_dev = rng.uniform(*cfg.gain_range, size=(D, B))
    gain_bs = rng.uniform(*cfg.gain_range, size=(B, S))
    cloud_delay_bs = rng.uniform(*cfg.delay_range, size=B)
    cloud_delay_srv = rng.uniform(*cfg.delay_range, size=S)
    wired_delay = rng.uniform(*cfg.delay_range, size=(S, S))
    if cfg.trace is not None:
        if t > cfg.trace.shape[0]:
            raise ValueError(f"trace has {cfg.trace.shape[0]} slots, asked for slot {t}")
        if cfg.trace.shape[1] != D:
            raise ValueError(f"trace has {cfg.trace.shape[1]} columns, topology has {D} devices")
        demand = cfg.trace[t - 1].copy()
    return EnvSample(t, demand, gain_dev, gain_bs, cloud_delay_bs, cloud_delay_srv, wired_delay)


def env_sequence(cfg: EnvConfig, top: Topology, horizon: int) -> list[EnvSample]:
    return [sample_env(cfg, top, t) for t in range(1, horizon + 1)]


def load_trace(path: str | Path, num_devices: int) -> np.ndarray:
    """Read a demand trace from CSV: no header, one column per device.

    Accepts LF or CRLF endings. Raises on ragged rows, non-numeric cells,
    or a column count that does not match num_devices.
    """
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != num_devices:
            raise ValueError(f"{path}:{ln}: expected {num_devices} columns, found {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: non-numeric cell") from exc
    if not rows:
        raise ValueError(f"{path}: empty trace")
    return np.asarray(rows, dtype=float)


def scale_trace(trace: np.ndarray, lo: float = 1.0, hi: float = 10.0) -> np.ndarray:
    """Affine min-max rescale of the whole trace onto [lo, hi].

    The global extrema are used (not per-column) so relative load between
    devices is preserved. A constant trace maps to the interval midpoint.
    """
    tr = np.asarray(trace, dtype=float)
    tmin, tmax = tr.min(), tr.max()
    if tmax == tmin:
        return np.full_like(tr, 0.5 * (lo + hi))
    return lo + (tr - tmin) * (hi - lo) / (tmax - tmin)
