"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the vectorized numpy
implementation is the fallback and the semantic reference. Set
``EDGEOCO_BACKEND=numpy`` (or ``python``) to force the fallback, or
``EDGEOCO_BACKEND=cython`` to insist on the compiled kernel (raises if it
is not built). ``cost_batch``/``constraints_batch`` and the Newton-side
helpers (``jac_batch``, ``al_hessian``, ``penalty_hessian``) are
bookkeeping next to the fused value/gradient evaluations and always come
from the numpy implementation.
"""

from __future__ import annotations

import os

import numpy as np

from . import numpy_backend
from .numpy_backend import (  # noqa: F401
    EnvStack,
    al_hessian,
    constraints_batch,
    cost_batch,
    jac_batch,
    penalty_hessian,
    stack_envs,
)

_requested = os.environ.get("EDGEOCO_BACKEND", "").strip().lower()
if _requested not in ("", "cython", "c", "numpy", "python"):
    raise ValueError(f"unknown EDGEOCO_BACKEND={_requested!r}")

_compiled = None
if _requested in ("", "cython", "c"):
    try:
        from . import _speedups as _compiled  # type: ignore[no-redef]
    except ImportError:
        if _requested:
            raise ImportError(
                "EDGEOCO_BACKEND=cython but edgeoco._kernels._speedups is not built"
            )

BACKEND = "numpy" if _compiled is None else "cython"


def _cython_penalty_eval(x, dims, params, envs, rho):
    D, B, S = dims
    return _compiled.penalty_eval_raw(
        np.ascontiguousarray(x, dtype=float), D, B, S, *params,
        envs.demand, envs.gain_dev, envs.gain_bs,
        envs.delay_bs, envs.delay_srv, envs.wired, rho)


def _cython_al_eval(x, dims, params, envs, rho, mu):
    D, B, S = dims
    return _compiled.al_eval_raw(
        np.ascontiguousarray(x, dtype=float), D, B, S, *params,
        envs.demand, envs.gain_dev, envs.gain_bs,
        envs.delay_bs, envs.delay_srv, envs.wired, rho,
        np.ascontiguousarray(mu, dtype=float))


penalty_eval = numpy_backend.penalty_eval if _compiled is None else _cython_penalty_eval
al_eval = numpy_backend.al_eval if _compiled is None else _cython_al_eval


def backend_name() -> str:
    return BACKEND
