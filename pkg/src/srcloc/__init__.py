"""Active source localization: filter teacher, distilled student, learned search."""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, default_config, load_config
from .fields import (
    HalfSpace3DField,
    Plume2DField,
    SingularPointError,
    Source2D,
    Source3D,
    field_by_name,
    green_3d,
    half_space_3d,
    plume_2d,
)
from .pf import (
    DegenerateUpdateError,
    ParticleSet,
    PriorBox,
    ess,
    init_particles,
    mh_rejuvenate,
    reweight,
    systematic_resample,
    weighted_moments,
)
from .rewards import RewardClipper, kl_weights
from .sensor import SensorParams, likelihood, sample_observation
from .stopping import credible_radius_gaussian, should_stop, spread_particles
from .student import GaussianBelief, StudentNet
from .policy import Critic, GaussianActor, PPOConfig

__all__ = [
    "ConfigError",
    "Critic",
    "DegenerateUpdateError",
    "GaussianActor",
    "GaussianBelief",
    "HalfSpace3DField",
    "ParticleSet",
    "Plume2DField",
    "PPOConfig",
    "PriorBox",
    "RewardClipper",
    "RunConfig",
    "SensorParams",
    "SingularPointError",
    "Source2D",
    "Source3D",
    "StudentNet",
    "credible_radius_gaussian",
    "default_config",
    "ess",
    "field_by_name",
    "green_3d",
    "half_space_3d",
    "init_particles",
    "kl_weights",
    "likelihood",
    "load_config",
    "mh_rejuvenate",
    "plume_2d",
    "reweight",
    "sample_observation",
    "should_stop",
    "spread_particles",
    "systematic_resample",
    "weighted_moments",
    "__version__",
]
