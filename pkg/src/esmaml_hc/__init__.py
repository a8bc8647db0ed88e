"""Noise-tolerant hill-climbing adaptation and evolution-strategies meta-learning."""

from .core import SeedSpec, cos_angle, sample_direction
from .objectives import (
    Adversarial,
    BoundedUniform,
    IidGaussian,
    NoNoise,
    NoisyObjective,
    Objective,
    QuadraticConcave,
    make_quadratic,
    verify_strong_concavity,
)
from .adaptation import AdaptationConfig, adapt, hc_average, hc_batch, hc_sequential
from .meta import MetaConfig, adaptation_gap, antithetic_step, es_maml_train, train_dr_baseline

__version__ = "0.1.0"
