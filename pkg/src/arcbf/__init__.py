"""Attack-resilient CLF-CBF quadratic-program control for control-affine systems.

The package is organised bottom-up:

- :mod:`arcbf.dynamics` -- plant models (scalar example, 2-DOF polar robot)
- :mod:`arcbf.certificates` -- CLF / CBF / HOCBF definitions and Lie derivatives
- :mod:`arcbf.resilience` -- attack compensation terms, gain laws, domination monitors
- :mod:`arcbf.qp` -- per-step QP assembly and an exact active-set solver
- :mod:`arcbf.attacks` -- piecewise false-data-injection signals
- :mod:`arcbf.sim` -- zero-order-hold closed-loop simulation with RK4
- :mod:`arcbf.analysis` -- excursion / recovery / ultimate-bound metrics
- :mod:`arcbf.config`, :mod:`arcbf.io`, :mod:`arcbf.plot`, :mod:`arcbf.cli` -- experiment runner
"""

from arcbf.attacks import AttackProfile, AttackSegment, eval_attack, profile_d1, profile_d2
from arcbf.dynamics import RobotParams, SystemModel, robot_system, scalar_system
from arcbf.qp import QpProblem, QpSolution, QpWeights, solve_active_set
from arcbf.resilience import AdaptationParams, EnvelopeParams, GainState, RegularizerSchedule
from arcbf.sim import ControllerKind, SimConfig, Trace, run_closed_loop

__version__ = "0.1.0"

__all__ = [
    "AdaptationParams",
    "AttackProfile",
    "AttackSegment",
    "ControllerKind",
    "EnvelopeParams",
    "GainState",
    "QpProblem",
    "QpSolution",
    "QpWeights",
    "RegularizerSchedule",
    "RobotParams",
    "SimConfig",
    "SystemModel",
    "Trace",
    "eval_attack",
    "profile_d1",
    "profile_d2",
    "robot_system",
    "run_closed_loop",
    "scalar_system",
    "solve_active_set",
]
