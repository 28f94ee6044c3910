"""Timing comparison of the pure-numpy and compiled solver kernels.

The two hot kernels (quadratic-penalty evaluation and the augmented-
Lagrangian evaluation, both returning value/gradient/max-violation) have
a vectorized numpy implementation and a Cython twin. This script times
both on the reference topology across a range of horizons and verifies
they agree to floating-point noise while doing so.

Run:  python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from edgeoco._kernels import numpy_backend, stack_envs
from edgeoco._kernels import _compiled, _cython_al_eval, _cython_penalty_eval
from edgeoco.environment import EnvConfig, env_sequence
from edgeoco.model import ActionSpace, CostParams
from edgeoco.topology import Topology

HORIZONS = (10, 100, 1000)
REPEATS = 30


def best_of(fn, repeats=REPEATS):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    if _compiled is None:
        print("compiled backend unavailable; nothing to compare")
        return
    top = Topology(2, 2, 2)
    space = ActionSpace(top)
    params = CostParams()
    dims = (top.D, top.B, top.S)
    pt = (params.bandwidth, params.cap_device, params.cap_server,
          params.delta_device, params.delta_server, params.delta_queue)
    rng = np.random.default_rng(7)
    x = rng.uniform(0.0, 1.0, space.V) * space.upper
    rho = 1e3

    print(f"{'kernel':<14}{'T':>6}{'numpy':>12}{'cython':>12}{'speedup':>9}")
    for T in HORIZONS:
        envs = stack_envs(env_sequence(EnvConfig(seed=1), top, T))
        mu = rng.uniform(0.0, 5.0, (T, top.num_constraints))

        for label, np_fn, cy_fn in (
            ("penalty_eval",
             lambda: numpy_backend.penalty_eval(x, dims, pt, envs, rho),
             lambda: _cython_penalty_eval(x, dims, pt, envs, rho)),
            ("al_eval",
             lambda: numpy_backend.al_eval(x, dims, pt, envs, rho, mu),
             lambda: _cython_al_eval(x, dims, pt, envs, rho, mu)),
        ):
            ra, rb = np_fn(), cy_fn()
            for a, b in zip(ra, rb):
                np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
            t_np = best_of(np_fn)
            t_cy = best_of(cy_fn)
            print(f"{label:<14}{T:>6}{t_np * 1e6:>10.1f}us"
                  f"{t_cy * 1e6:>10.1f}us{t_np / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
