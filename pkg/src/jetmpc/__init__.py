"""Multi-rate linear MPC for a jet-powered humanoid torso, with a closed-loop simulator.

The main entry points are :func:`jetmpc.sim.simulate` for closed-loop
runs, :class:`jetmpc.mpc.MultiRateMpc` for the controller and
:func:`jetmpc.config.load_config` for JSON scenario files.
"""

from .config import RunSpec, build_scenario, load_config, parse_config
from .dynamics import dynamics, linearize
from .errors import ConfigError, SingularGainError, SingularityError
from .jets import JetParams
from .kinematics import RobotModel, default_robot
from .mpc import MULTI_RATE, NO_JET_DYNAMICS, SINGLE_RATE, MpcConfig, MpcWeights, MultiRateMpc
from .qp import QpSolver, SolverSettings, SparseQp
from .sim import Disturbance, Scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Disturbance", "JetParams", "MULTI_RATE", "MpcConfig", "MpcWeights",
    "MultiRateMpc", "NO_JET_DYNAMICS", "QpSolver", "RobotModel", "RunSpec", "SINGLE_RATE",
    "Scenario", "SingularGainError", "SingularityError", "SolverSettings", "SparseQp",
    "build_scenario", "default_robot", "dynamics", "linearize", "load_config", "parse_config",
    "simulate",
]
