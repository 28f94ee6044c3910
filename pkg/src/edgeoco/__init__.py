"""Slotted simulator for distributed online resource allocation on
device / base-station / edge-server topologies.

Primal-dual agents exchange one round of messages per slot and adapt under
delayed multiplier feedback; centralized and selfish baselines, offline
benchmark solvers, regret/violation accounting and performance-bound
certificates live in the submodules.
"""

__version__ = "0.1.0"

from .topology import Topology, NodeId, build_topology  # noqa: F401
from .environment import EnvConfig, EnvSample, sample_env  # noqa: F401
from .model import ActionSpace, BoxBounds, CostParams  # noqa: F401
from .agents import HyperParams, run_cooperative, run_distributed  # noqa: F401
from .baselines import run_centralized, run_selfish  # noqa: F401
from .oracle import solve_dynamic, solve_static  # noqa: F401
from .bounds import bound_constants, guarantees, sigma_auto, step_size  # noqa: F401
from .metrics import RunRecord, dynamic_regret, fit, static_regret  # noqa: F401
from .runner import ExperimentConfig, load_config, run_experiment  # noqa: F401
