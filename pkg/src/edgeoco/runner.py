"""Experiment orchestration: seeded runs, metric curves, benchmark solves,
performance-bound checks, and machine-readable result files.

One experiment is described by an :class:`ExperimentConfig` (JSON on disk).
``run_experiment`` executes every configured algorithm over every seed for
the full horizon, computes normalized fit/regret curves over horizon
prefixes, evaluates the guarantee values for each run, and writes CSV
files plus a JSON manifest into the output directory. The manifest embeds
the fully resolved config, so feeding it back to ``load_config`` re-runs
the identical experiment (round-trip property).

Curves reuse one long trajectory per (algorithm, seed): fit and the
dynamic comparator prefix exactly, while the static comparator is
re-solved per prefix horizon (its definition depends on T), warm-started
up the ladder. Step sizes follow eta = eta0 / sqrt(T) at T = horizon; the
optional ``replay_horizons`` re-run the algorithms at shorter horizons
with the matching step size so the guarantee rows use the right eta(T).

Everything is sequential and counter-seeded, so two invocations with the
same config produce byte-identical output trees.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agents import HyperParams, run_cooperative
from .baselines import run_centralized, run_selfish
from .bounds import BoundConstants, bound_constants, guarantees, sigma_auto, step_size
from .environment import EnvConfig, env_sequence, load_trace, scale_trace
from .metrics import (RunRecord, comparator_costs, cost_gap, dynamic_regret,
                      fit, static_regret)
from .model import ActionSpace, BoxBounds, CostParams
from .oracle import (SolveReport, dynamic_objectives, dynamic_solutions_array,
                     path_length, solve_dynamic, solve_static)
from .topology import Topology

ALGORITHMS = {
    "centralized": run_centralized,
    "cooperative": run_cooperative,
    "selfish": run_selfish,
}

SIGMA_AUTO = "auto"


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated description of one experiment."""

    topology: tuple[int, int, int] = (2, 2, 2)
    box: BoxBounds = BoxBounds()
    cost: CostParams = CostParams()
    gain_range: tuple[float, float] = (8.0, 15.0)
    delay_range: tuple[float, float] = (3.0, 10.0)
    demand_range: tuple[float, float] = (1.0, 10.0)
    trace_path: str | None = None
    trace_scale: tuple[float, float] | None = None
    eta0: float = 0.009
    sigma: float | str = 2.0
    horizon: int = 300
    seeds: tuple[int, ...] = (1, 2, 3, 4)
    algorithms: tuple[str, ...] = ("centralized", "cooperative", "selfish")
    outdir: str = "results"
    metrics_stride: int = 10
    replay_horizons: tuple[int, ...] = ()
    feas_tol: float = 1e-6

    def __post_init__(self):
        D, B, S = self.topology
        if min(D, B, S) < 1:
            raise ValueError("topology counts must be positive")
        if not (np.isfinite(self.eta0) and self.eta0 > 0):
            raise ValueError("eta0 must be positive")
        if self.sigma != SIGMA_AUTO:
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise ValueError(f"sigma must be positive or {SIGMA_AUTO!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not (1 <= self.metrics_stride <= self.horizon):
            raise ValueError("metrics_stride must lie in [1, horizon]")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        seen = set()
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
            if a in seen:
                raise ValueError(f"algorithm {a!r} listed twice")
            seen.add(a)
        if any(t < 1 for t in self.replay_horizons):
            raise ValueError("replay horizons must be positive")
        if self.trace_scale is not None:
            lo, hi = self.trace_scale
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 <= lo <= hi):
                raise ValueError("trace_scale must be 0 <= lo <= hi")
            if self.trace_path is None:
                raise ValueError("trace_scale given without trace_path")
        if not (np.isfinite(self.feas_tol) and self.feas_tol > 0):
            raise ValueError("feas_tol must be positive")

    def to_dict(self) -> dict:
        return {
            "topology": list(self.topology),
            "box": dataclasses.asdict(self.box),
            "cost": dataclasses.asdict(self.cost),
            "env": {
                "gain_range": list(self.gain_range),
                "delay_range": list(self.delay_range),
                "demand_range": list(self.demand_range),
                "trace_path": self.trace_path,
                "trace_scale": (None if self.trace_scale is None
                                else list(self.trace_scale)),
            },
            "hyper": {"eta0": self.eta0, "sigma": self.sigma},
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "algorithms": list(self.algorithms),
            "outdir": self.outdir,
            "metrics_stride": self.metrics_stride,
            "replay_horizons": list(self.replay_horizons),
            "feas_tol": self.feas_tol,
        }


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the JSON object form; unknown keys are errors."""
    known = {"topology", "box", "cost", "env", "hyper", "horizon", "seeds",
             "algorithms", "outdir", "metrics_stride", "replay_horizons",
             "feas_tol"}
    extra = set(raw) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    kw: dict = {}
    if "topology" in raw:
        kw["topology"] = tuple(int(v) for v in raw["topology"])
    if "box" in raw:
        kw["box"] = BoxBounds(**raw["box"])
    if "cost" in raw:
        kw["cost"] = CostParams(**raw["cost"])
    env = raw.get("env", {})
    extra = set(env) - {"gain_range", "delay_range", "demand_range",
                        "trace_path", "trace_scale"}
    if extra:
        raise ValueError(f"unknown env keys: {sorted(extra)}")
    for key in ("gain_range", "delay_range", "demand_range"):
        if key in env:
            kw[key] = tuple(float(v) for v in env[key])
    if env.get("trace_path") is not None:
        kw["trace_path"] = str(env["trace_path"])
    if env.get("trace_scale") is not None:
        kw["trace_scale"] = tuple(float(v) for v in env["trace_scale"])
    hyper = raw.get("hyper", {})
    extra = set(hyper) - {"eta0", "sigma"}
    if extra:
        raise ValueError(f"unknown hyper keys: {sorted(extra)}")
    if "eta0" in hyper:
        kw["eta0"] = float(hyper["eta0"])
    if "sigma" in hyper:
        kw["sigma"] = (hyper["sigma"] if hyper["sigma"] == SIGMA_AUTO
                       else float(hyper["sigma"]))
    for key in ("horizon", "metrics_stride"):
        if key in raw:
            kw[key] = int(raw[key])
    if "seeds" in raw:
        kw["seeds"] = tuple(int(s) for s in raw["seeds"])
    if "algorithms" in raw:
        kw["algorithms"] = tuple(str(a) for a in raw["algorithms"])
    if "outdir" in raw:
        kw["outdir"] = str(raw["outdir"])
    if "replay_horizons" in raw:
        kw["replay_horizons"] = tuple(int(t) for t in raw["replay_horizons"])
    if "feas_tol" in raw:
        kw["feas_tol"] = float(raw["feas_tol"])
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a config file; a manifest (with a "config" section) also works.

    A relative trace path is resolved against the config file's directory
    and stored absolute, so the embedded copy in the manifest stays valid
    from anywhere.
    """
    path = Path(path)
    raw = json.loads(path.read_text())
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    cfg = config_from_dict(raw)
    if cfg.trace_path is not None and not Path(cfg.trace_path).is_absolute():
        resolved = (path.parent / cfg.trace_path).resolve()
        cfg = dataclasses.replace(cfg, trace_path=str(resolved))
    return cfg


# --------------------------------------------------------------------------
# resolution
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolvedExperiment:
    """Config plus everything derived from it before any run starts."""

    cfg: ExperimentConfig
    space: ActionSpace
    trace: np.ndarray | None
    consts: BoundConstants
    sigma: float
    eta: float  # step size of the main (horizon-length) run

    @property
    def top(self) -> Topology:
        return self.space.top

    def env_for(self, seed: int) -> EnvConfig:
        return EnvConfig(seed=seed, gain_range=self.cfg.gain_range,
                         delay_range=self.cfg.delay_range,
                         demand_range=self.cfg.demand_range, trace=self.trace)


def resolve(cfg: ExperimentConfig) -> ResolvedExperiment:
    top = Topology(*cfg.topology)
    space = ActionSpace(top, cfg.box)
    trace = None
    if cfg.trace_path is not None:
        trace = load_trace(cfg.trace_path, top.D)
        if cfg.trace_scale is not None:
            trace = scale_trace(trace, *cfg.trace_scale)
        if trace.shape[0] < max((cfg.horizon, *cfg.replay_horizons)):
            raise ValueError("trace shorter than the longest configured run")
    env0 = EnvConfig(seed=0, gain_range=cfg.gain_range,
                     delay_range=cfg.delay_range,
                     demand_range=cfg.demand_range, trace=trace)
    demand_hi = float(trace.max()) if trace is not None else None
    consts = bound_constants(space, cfg.cost, env0, demand_hi=demand_hi)
    sigma = sigma_auto(consts) if cfg.sigma == SIGMA_AUTO else float(cfg.sigma)
    return ResolvedExperiment(cfg=cfg, space=space, trace=trace,
                              consts=consts, sigma=sigma,
                              eta=step_size(cfg.eta0, cfg.horizon))


def metrics_grid(cfg: ExperimentConfig) -> list[int]:
    return list(range(cfg.metrics_stride, cfg.horizon + 1, cfg.metrics_stride))


# --------------------------------------------------------------------------
# benchmark solves (shared by the runner and the solve-bench command)
# --------------------------------------------------------------------------

@dataclass
class SeedBench:
    """Oracle outputs for one seed: static ladder plus per-slot optima."""

    seed: int
    envs: list
    static: dict[int, SolveReport]        # prefix horizon -> solve
    static_costs: dict[int, np.ndarray]   # prefix horizon -> (T,) costs
    dynamic: list[SolveReport]
    dynamic_costs: np.ndarray


def compute_bench(res: ResolvedExperiment, seed: int,
                  prefixes: list[int]) -> SeedBench:
    """Solve the static comparator at every prefix in ``prefixes`` (warm-
    started in increasing order) and the dynamic comparator per slot."""
    cfg = res.cfg
    horizon = max((cfg.horizon, *cfg.replay_horizons, *prefixes))
    envs = env_sequence(res.env_for(seed), res.top, horizon)
    static: dict[int, SolveReport] = {}
    static_costs: dict[int, np.ndarray] = {}
    warm = None
    for T in sorted(set(prefixes)):
        rep = solve_static(res.space, cfg.cost, envs[:T], x0=warm,
                           feas_tol=cfg.feas_tol)
        static[T] = rep
        static_costs[T] = comparator_costs(res.space, cfg.cost,
                                           rep.solution, envs[:T])
        warm = rep.solution
    dynamic = solve_dynamic(res.space, cfg.cost, envs, feas_tol=cfg.feas_tol)
    return SeedBench(seed=seed, envs=envs, static=static,
                     static_costs=static_costs, dynamic=dynamic,
                     dynamic_costs=dynamic_objectives(dynamic))


def bench_prefixes(cfg: ExperimentConfig) -> list[int]:
    """Every horizon at which a static comparator is needed."""
    return sorted({*metrics_grid(cfg), cfg.horizon, *cfg.replay_horizons})


# --------------------------------------------------------------------------
# runs and bound rows
# --------------------------------------------------------------------------

def run_algorithm(res: ResolvedExperiment, name: str, seed_envs,
                  horizon: int, eta: float) -> RunRecord:
    hp = HyperParams(eta=eta, sigma=res.sigma)
    return ALGORITHMS[name](res.space, res.cfg.cost, seed_envs[:horizon], hp)


def bound_row(res: ResolvedExperiment, kind: str, name: str,
              bench: SeedBench, record: RunRecord, horizon: int,
              eta: float) -> dict:
    """Guarantee values and satisfaction flags for one finished run."""
    srep = bench.static[horizon]
    feasible = bool(srep.converged
                    and srep.max_violation <= res.cfg.feas_tol)
    reg_s = static_regret(record, bench.static_costs[horizon], horizon)
    reg_d = dynamic_regret(record, bench.dynamic_costs, horizon)
    fit_v = fit(record, horizon)
    path = path_length(dynamic_solutions_array(bench.dynamic[:horizon]))
    gu = guarantees(res.consts, eta, res.sigma, horizon, path)
    return {
        "kind": kind, "algorithm": name, "seed": bench.seed, "T": horizon,
        "eta": eta, "sigma": res.sigma, "path_length": path,
        "static_feasible": feasible,
        "reg_static": reg_s, "reg_dynamic": reg_d, "fit": fit_v,
        "u_static": gu.static_regret, "u_dynamic": gu.dynamic_regret,
        "u_fit": gu.fit, "beta": gu.beta,
        "sat_static": bool(reg_s <= gu.static_regret),
        "sat_dynamic": bool(reg_d <= gu.dynamic_regret),
        "sat_fit": bool(fit_v <= gu.fit),
    }


# --------------------------------------------------------------------------
# file emission
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    """Shortest exact decimal form; deterministic for a given value."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[col]) for col in header])


def save_arrays(path: Path, arrays: dict[str, np.ndarray]) -> None:
    """npz with zeroed timestamps so identical data gives identical bytes."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


CURVE_HEADER = ["T", "algorithm", "metric", "mean", "std"]
BOUNDS_HEADER = ["kind", "algorithm", "seed", "T", "eta", "sigma",
                 "path_length", "static_feasible", "reg_static",
                 "reg_dynamic", "fit", "u_static", "u_dynamic", "u_fit",
                 "beta", "sat_static", "sat_dynamic", "sat_fit"]
BENCH_HEADER = ["seed", "kind", "T", "objective", "max_violation",
                "converged", "iterations", "rho"]


def bench_rows(benches: list[SeedBench]) -> list[dict]:
    rows = []
    for b in benches:
        for T in sorted(b.static):
            r = b.static[T]
            rows.append({"seed": b.seed, "kind": "static", "T": T,
                         "objective": r.objective,
                         "max_violation": r.max_violation,
                         "converged": r.converged, "iterations": r.iterations,
                         "rho": r.rho})
        for t, r in enumerate(b.dynamic, start=1):
            rows.append({"seed": b.seed, "kind": "dynamic", "T": t,
                         "objective": r.objective,
                         "max_violation": r.max_violation,
                         "converged": r.converged, "iterations": r.iterations,
                         "rho": r.rho})
    return rows


def _curve_stats(values: list[list[float]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(values, dtype=float)  # (seeds, grid)
    return arr.mean(axis=0), arr.std(axis=0)


# --------------------------------------------------------------------------
# the experiment
# --------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute the experiment and write all result files.

    Returns the manifest dict (also written to ``manifest.json``).
    """
    res = resolve(cfg)
    outdir = Path(cfg.outdir)
    (outdir / "runs").mkdir(parents=True, exist_ok=True)
    grid = metrics_grid(cfg)
    prefixes = bench_prefixes(cfg)

    benches = [compute_bench(res, s, prefixes) for s in cfg.seeds]

    # trajectories: one full-horizon run per (algorithm, seed), plus the
    # step-size-matched replays for the guarantee rows
    bounds_rows: list[dict] = []
    curve_files: list[str] = []
    for name in cfg.algorithms:
        fit_curves, rs_curves, rd_curves = [], [], []
        for bench in benches:
            record = run_algorithm(res, name, bench.envs, cfg.horizon, res.eta)
            fit_curves.append([fit(record, T) / T for T in grid])
            rs_curves.append([static_regret(record, bench.static_costs[T], T) / T
                              if bench.static[T].converged else float("nan")
                              for T in grid])
            rd_curves.append([dynamic_regret(record, bench.dynamic_costs, T) / T
                              for T in grid])
            bounds_rows.append(bound_row(res, "main", name, bench, record,
                                         cfg.horizon, res.eta))
            save_arrays(outdir / "runs" / f"{name}_seed{bench.seed}.npz",
                        {"x": record.actions, "costs": record.costs,
                         "g": record.g, "h": record.h, "lam": record.lam,
                         "m1_counts": record.m1_counts,
                         "m2_counts": record.m2_counts})
            for T in cfg.replay_horizons:
                eta_t = step_size(cfg.eta0, T)
                replay = run_algorithm(res, name, bench.envs, T, eta_t)
                bounds_rows.append(bound_row(res, "replay", name, bench,
                                             replay, T, eta_t))
        rows = []
        for metric, curves in (("fit_norm", fit_curves),):
            mean, std = _curve_stats(curves)
            rows += [{"T": T, "algorithm": name, "metric": metric,
                      "mean": mean[i], "std": std[i]}
                     for i, T in enumerate(grid)]
        write_csv(outdir / f"{name}_fit.csv", CURVE_HEADER, rows)
        curve_files.append(f"{name}_fit.csv")
        rows = []
        for metric, curves in (("reg_static_norm", rs_curves),
                               ("reg_dynamic_norm", rd_curves)):
            mean, std = _curve_stats(curves)
            rows += [{"T": T, "algorithm": name, "metric": metric,
                      "mean": mean[i], "std": std[i]}
                     for i, T in enumerate(grid)]
        write_csv(outdir / f"{name}_regret.csv", CURVE_HEADER, rows)
        curve_files.append(f"{name}_regret.csv")

    # benchmark-only series: cost gap between the prefix-T static optimum
    # and the per-slot optima
    gaps = [[cost_gap(b.static_costs[T], b.dynamic_costs, T) for T in grid]
            for b in benches]
    mean, std = _curve_stats(gaps)
    gap_rows = [{"T": T, "algorithm": "benchmark", "metric": "cost_gap",
                 "mean": mean[i], "std": std[i]} for i, T in enumerate(grid)]
    write_csv(outdir / "gap.csv", CURVE_HEADER, gap_rows)

    write_csv(outdir / "bounds.csv", BOUNDS_HEADER, bounds_rows)
    write_csv(outdir / "benchmarks.csv", BENCH_HEADER, bench_rows(benches))

    # realized demand of the first seed (with a trace this mirrors it)
    D = res.top.D
    demand_header = ["t"] + [f"device_{d}" for d in range(D)]
    demand_rows = [dict({"t": t}, **{f"device_{d}": env.demand[d]
                                     for d in range(D)})
                   for t, env in enumerate(benches[0].envs[:cfg.horizon], 1)]
    write_csv(outdir / "demand.csv", demand_header, demand_rows)

    files = sorted(curve_files + ["gap.csv", "bounds.csv", "benchmarks.csv",
                                  "demand.csv", "manifest.json"]
                   + [f"runs/{n}_seed{s}.npz" for n in cfg.algorithms
                      for s in cfg.seeds])
    manifest = {
        "config": cfg.to_dict(),
        "resolved": {
            "sigma": res.sigma,
            "eta_main": res.eta,
            "metrics_grid": grid,
            "constants": {
                "R": res.consts.radius,
                "F": res.consts.cost_ceiling,
                "G": res.consts.h_norm_ceiling,
                "N": res.consts.num_nodes,
                "M": res.consts.num_constraints,
                "E": res.consts.num_edges,
                "K": res.consts.coupling,
            },
            "version": __version__,
        },
        "files": files,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def solve_benchmarks(cfg: ExperimentConfig) -> Path:
    """solve-bench: emit only the oracle solutions and their summary."""
    res = resolve(cfg)
    outdir = Path(cfg.outdir)
    (outdir / "bench").mkdir(parents=True, exist_ok=True)
    prefixes = bench_prefixes(cfg)
    benches = [compute_bench(res, s, prefixes) for s in cfg.seeds]
    write_csv(outdir / "benchmarks.csv", BENCH_HEADER, bench_rows(benches))
    for b in benches:
        ts = sorted(b.static)
        save_arrays(outdir / "bench" / f"seed{b.seed}.npz", {
            "static_horizons": np.array(ts, dtype=np.int64),
            "static_solutions": np.stack([b.static[T].solution for T in ts]),
            "static_objectives": np.array([b.static[T].objective for T in ts]),
            "dynamic_solutions": dynamic_solutions_array(b.dynamic),
            "dynamic_objectives": b.dynamic_costs,
        })
    return outdir / "benchmarks.csv"


def check_bounds_dir(rundir: str | Path) -> tuple[list[str], bool]:
    """check-bounds: re-assert the guarantee rows of a finished run.

    Rows with beta <= 0 sit outside the guarantee's precondition
    (sigma above the coupling floor) and are reported as skipped. The
    dynamic-regret flag only applies when the static benchmark was
    feasible. Returns (report lines, overall pass).
    """
    path = Path(rundir) / "bounds.csv"
    lines: list[str] = []
    ok = True
    with path.open() as fh:
        for row in csv.DictReader(fh):
            tag = (f"{row['kind']} {row['algorithm']} seed={row['seed']} "
                   f"T={row['T']}")
            if float(row["beta"]) <= 0.0:
                lines.append(f"SKIP {tag}: sigma below the guarantee floor")
                continue
            checks = [("reg_static", "u_static", row["sat_static"] == "True")]
            if row["static_feasible"] == "True":
                checks.append(("reg_dynamic", "u_dynamic",
                               row["sat_dynamic"] == "True"))
            checks.append(("fit", "u_fit", row["sat_fit"] == "True"))
            bad = [f"{m}={row[m]} > {row[u]}" for m, u, sat in checks
                   if not sat]
            if bad:
                ok = False
                lines.append(f"FAIL {tag}: " + "; ".join(bad))
            else:
                lines.append(f"OK   {tag}")
    return lines, ok
