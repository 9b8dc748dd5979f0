"""Physics-informed neural networks trained with pseudo-time stepping."""

__version__ = "0.1.0"

from .losses import CausalConfig, GlobalWeights, LossBreakdown, empirical_losses, pts_loss  # noqa: E402
from .models import ConfigError, PirateNetConfig, apply, init_params  # noqa: E402
from .problems import PROBLEMS, get_problem, reference_solve, relative_l2  # noqa: E402
from .pts import PtsState  # noqa: E402
from .trainer import TrainConfig, TrainHistory, evaluate, train  # noqa: E402

__all__ = [
    "PROBLEMS",
    "CausalConfig",
    "ConfigError",
    "GlobalWeights",
    "LossBreakdown",
    "PirateNetConfig",
    "PtsState",
    "TrainConfig",
    "TrainHistory",
    "apply",
    "empirical_losses",
    "evaluate",
    "get_problem",
    "init_params",
    "pts_loss",
    "reference_solve",
    "relative_l2",
    "train",
]
