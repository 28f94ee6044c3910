"""Shared instance builders for the test suite."""

from edgeoco.environment import EnvConfig, env_sequence
from edgeoco.model import ActionSpace, BoxBounds, CostParams
from edgeoco.topology import build_topology


def make_instance(D=2, B=2, S=2, seed=7, horizon=0, **env_kw):
    """Default-sized instance plus a pre-sampled environment sequence."""
    top = build_topology(D, B, S)
    space = ActionSpace(top, BoxBounds())
    params = CostParams.from_space(space)
    cfg = EnvConfig(seed=seed, **env_kw)
    envs = env_sequence(cfg, top, horizon) if horizon else []
    return space, params, cfg, envs
