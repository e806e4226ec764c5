"""Online Bayesian probit regression over sparse binary features.

Every feature ID carries an independent Gaussian belief over its weight.
An observation ``(x, y)`` touches only the beliefs of the IDs active in
``x``; everything else is left bit-identical.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from ..errors import ConfigError, InvalidInputError
from .probit import norm_cdf, v

log = logging.getLogger(__name__)

DEFAULT_BETA = 5.0
VARIANCE_FLOOR = 1e-12

_P_MIN = sys.float_info.min
_P_MAX = 1.0 - 2.0**-53


class FeatureVector(tuple):
    """Ordered, duplicate-free tuple of active feature IDs.

    Each ID stands for one coordinate equal to 1 in the binary 1-in-N
    encoding; absent IDs are 0.
    """

    __slots__ = ()

    def __new__(cls, ids: Iterable[int] = ()):
        return super().__new__(cls, dict.fromkeys(ids))


@dataclass(frozen=True)
class ModelConfig:
    beta: float = DEFAULT_BETA
    prior_mean: float = 0.0
    prior_variance: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not (math.isfinite(self.prior_variance) and self.prior_variance > 0):
            raise ConfigError(f"prior_variance must be positive, got {self.prior_variance}")
        if not math.isfinite(self.prior_mean):
            raise ConfigError(f"prior_mean must be finite, got {self.prior_mean}")


@dataclass(slots=True)
class GaussianBelief:
    mean: float
    variance: float


class TotalMoments(NamedTuple):
    total_mean: float
    total_variance: float


@dataclass
class ModelState:
    """Weight beliefs plus hyperparameters.

    Not safe for concurrent ``update`` calls; ``predict`` and
    ``total_moments`` only read and can share a frozen state.
    """

    config: ModelConfig = field(default_factory=ModelConfig)
    weights: dict[int, GaussianBelief] = field(default_factory=dict)
    observations_seen: int = 0
    variance_clamps: int = field(default=0, compare=False)

    def prior(self) -> GaussianBelief:
        return GaussianBelief(self.config.prior_mean, self.config.prior_variance)

    def belief(self, feature_id: int) -> GaussianBelief:
        """Current belief for ``feature_id``; the prior if never seen.

        Unseen IDs are not inserted.
        """
        b = self.weights.get(feature_id)
        return GaussianBelief(b.mean, b.variance) if b is not None else self.prior()

    def total_moments(self, x: Iterable[int]) -> TotalMoments:
        m0 = self.config.prior_mean
        v0 = self.config.prior_variance
        mean = 0.0
        var = 0.0
        get = self.weights.get
        for fid in x:
            b = get(fid)
            if b is None:
                mean += m0
                var += v0
            else:
                mean += b.mean
                var += b.variance
        return TotalMoments(mean, var + self.config.beta**2)

    def predict(self, x: Iterable[int]) -> float:
        """Predictive switch probability ``Phi(U / Sigma)``."""
        mean, var = self.total_moments(x)
        p = norm_cdf(mean / math.sqrt(var))
        return min(max(p, _P_MIN), _P_MAX)

    def update(self, x: FeatureVector, y: int) -> None:
        """Absorb one labelled observation (``y`` is +1 or -1)."""
        if y != 1 and y != -1:
            raise InvalidInputError(f"label must be +1 or -1, got {y!r}")
        x = tuple(x)
        if not x:
            raise InvalidInputError("cannot update on an empty feature vector")
        if len(set(x)) != len(x):
            raise InvalidInputError("feature vector contains duplicate IDs")

        weights = self.weights
        m0 = self.config.prior_mean
        v0 = self.config.prior_variance
        beliefs = []
        for fid in x:
            b = weights.get(fid)
            if b is None:
                b = weights[fid] = GaussianBelief(m0, v0)
            beliefs.append(b)

        total_mean = 0.0
        total_var = self.config.beta**2
        for b in beliefs:
            total_mean += b.mean
            total_var += b.variance
        sigma = math.sqrt(total_var)
        t = y * total_mean / sigma
        vt = v(t)
        wt = vt * (vt + t)

        mean_step = y * vt / sigma
        shrink = wt / total_var
        for b in beliefs:
            var = b.variance
            b.mean += var * mean_step
            new_var = var * (1.0 - var * shrink)
            if new_var < VARIANCE_FLOOR:
                new_var = VARIANCE_FLOOR
                self.variance_clamps += 1
                log.debug("variance floor hit (%d so far)", self.variance_clamps)
            b.variance = new_var
        self.observations_seen += 1
