"""Numerical reference for the single-weight posterior.

Integrates the tilted density ``Phi(y*w/beta) * N(w; m, s2)`` directly
with adaptive quadrature.  Nothing here reuses the closed-form update, so
it can serve as an independent check on it.
"""

import math

from scipy import integrate, optimize
from scipy.special import log_ndtr

from ..errors import InvalidInputError, NumericError


def _log_density(w, prior_mean, prior_variance, beta, y):
    z = w - prior_mean
    return float(log_ndtr(y * w / beta)) - 0.5 * z * z / prior_variance


def exact_posterior_moments_1d(prior_mean, prior_variance, beta, y, rtol=1e-12):
    """Mean and variance of ``p(w) ~ Phi(y*w/beta) N(w; prior_mean, prior_variance)``.

    Returns ``(mean, variance)``.  Raises :class:`NumericError` if the
    quadrature does not reach ``rtol``.
    """
    if not prior_variance > 0 or not beta > 0:
        raise InvalidInputError("prior_variance and beta must be positive")
    if y not in (1, -1):
        raise InvalidInputError(f"label must be +1 or -1, got {y!r}")

    sd = math.sqrt(prior_variance)

    def neg(w):
        return -_log_density(w, prior_mean, prior_variance, beta, y)

    # The density is log-concave, so the mode is unique and lies within a
    # few prior widths of the prior mean plus the likelihood's pull.
    lo = prior_mean - 60.0 * sd
    hi = prior_mean + 60.0 * sd
    mode = optimize.minimize_scalar(
        neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * sd}
    ).x
    log_peak = -neg(mode)

    # Local width from the curvature; the Gaussian factor caps it at sd.
    h = 1e-4 * sd
    curv = (neg(mode + h) - 2.0 * neg(mode) + neg(mode - h)) / (h * h)
    width = min(sd, 1.0 / math.sqrt(curv)) if curv > 0 else sd

    a = mode - 40.0 * sd
    b = mode + 40.0 * sd
    breaks = sorted(
        p for k in (0.5, 2.0, 8.0, 32.0) for p in (mode - k * width, mode + k * width)
        if a < p < b
    )

    def quad(fn, scale):
        val, err = integrate.quad(
            fn, a, b, points=breaks, limit=1000, epsabs=rtol * scale, epsrel=rtol
        )
        if not math.isfinite(val) or err > 1e-9 * max(abs(val), scale):
            raise NumericError(f"quadrature did not converge (value={val}, err={err})")
        return val

    def density(w):
        return math.exp(_log_density(w, prior_mean, prior_variance, beta, y) - log_peak)

    z = quad(density, width)
    # Moments about the mode keep the variance free of cancellation.
    shift = quad(lambda w: (w - mode) * density(w), z * width) / z
    second = quad(lambda w: (w - mode) ** 2 * density(w), z * width * width) / z
    mean = mode + shift
    return float(mean), float(second - shift * shift)
