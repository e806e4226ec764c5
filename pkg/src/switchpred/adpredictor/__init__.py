"""AdPredictor: Bayesian online probit regression with Gaussian weight beliefs."""

from .io import deserialize_model, load_model, save_model, serialize_model
from .model import (
    DEFAULT_BETA,
    FeatureVector,
    GaussianBelief,
    ModelConfig,
    ModelState,
    TotalMoments,
)
from .oracle import exact_posterior_moments_1d
from .probit import norm_cdf, norm_pdf, v, w

__all__ = [
    "DEFAULT_BETA",
    "FeatureVector",
    "GaussianBelief",
    "ModelConfig",
    "ModelState",
    "TotalMoments",
    "deserialize_model",
    "exact_posterior_moments_1d",
    "load_model",
    "norm_cdf",
    "norm_pdf",
    "save_model",
    "serialize_model",
    "v",
    "w",
]
