"""Score-distillation lab.

SDS, VSD and entropic score distillation (ESD) on generator/target pairs
whose scores and objectives are available in closed form.
"""

from .distill import (ConfigError, DistillConfig, LearnedScores, Method, OracleScores, RandomStreams,
                      Trajectory, esd_cfg_grad, esd_exact_grad, run, sds_grad, vsd_grad)
from .generators import DiscreteViewGenerator, LinearGaussianGenerator, RenderSample
from .kernels import BACKEND
from .schedule import DiffusionSchedule, ScheduleDomainError
from .score_model import NULL, AffineScoreModel, score_from_eps
from .targets import GaussianTarget, MixtureTarget

__version__ = "0.1.0"

__all__ = [
    "AffineScoreModel", "BACKEND", "ConfigError", "DiffusionSchedule", "DiscreteViewGenerator", "DistillConfig",
    "GaussianTarget", "LearnedScores", "LinearGaussianGenerator", "Method", "MixtureTarget", "NULL",
    "OracleScores", "RandomStreams", "RenderSample", "ScheduleDomainError", "Trajectory", "esd_cfg_grad",
    "esd_exact_grad", "run", "score_from_eps", "sds_grad", "vsd_grad",
]
