"""Finite-horizon optimal control for state-dependent switched systems.

The package bundles one problem family (piecewise dynamics selected by
affine region membership, quadratic stage costs, box-bounded controls)
with four solvers that cross-check each other:

- ``ddpg``: model-free actor-critic learning on the simulated env,
- ``ddp``: iterative LQR with finite-difference models through events,
- ``hmp``: minimum-principle shooting for the scalar two-region case,
- ``hjb``: a semi-Lagrangian grid solver used as the value oracle.

``bench``/``cli`` wrap the benchmarks behind one experiment harness.
"""

from .ddp import DdpConfig, DdpSolution, NotPositiveDefiniteError
from .ddpg import DdpgConfig, LearningCurve, ReplayBuffer, train
from .envs import ENV_MAKERS, EnvConfig, Episode, make_env
from .hjb import GridSpec, ValueTable, greedy_policy_eval, solve_backward
from .hmp import HmpProblem, HmpSolution, ScalarMode, find_bracket, shoot
from .nets import MlpParams, init_params, load_checkpoint, save_checkpoint
from .simulate import (
    IntegratorConfig,
    SwitchEvent,
    Trajectory,
    ZenoError,
    rollout_open_loop,
    rollout_policy,
    step_with_events,
)
from .systems import (
    AffineBoundary,
    Mode,
    ModeDynamics,
    RegionSpec,
    StageCost,
    SwitchedSystem,
    classify,
    stage_cost,
    vector_field,
)

__version__ = "0.1.0"

__all__ = [
    "AffineBoundary",
    "DdpConfig",
    "DdpSolution",
    "DdpgConfig",
    "ENV_MAKERS",
    "EnvConfig",
    "Episode",
    "GridSpec",
    "HmpProblem",
    "HmpSolution",
    "IntegratorConfig",
    "LearningCurve",
    "Mode",
    "ModeDynamics",
    "MlpParams",
    "NotPositiveDefiniteError",
    "RegionSpec",
    "ReplayBuffer",
    "ScalarMode",
    "StageCost",
    "SwitchEvent",
    "SwitchedSystem",
    "Trajectory",
    "ValueTable",
    "ZenoError",
    "classify",
    "find_bracket",
    "greedy_policy_eval",
    "init_params",
    "load_checkpoint",
    "make_env",
    "rollout_open_loop",
    "rollout_policy",
    "save_checkpoint",
    "shoot",
    "solve_backward",
    "stage_cost",
    "step_with_events",
    "train",
    "vector_field",
]
