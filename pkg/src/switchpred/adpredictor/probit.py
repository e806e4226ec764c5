"""Standard normal helpers and the probit correction functions v and w.

``v(t) = N(t) / Phi(t)`` is the inverse Mills ratio of the lower tail and
``w(t) = v(t) * (v(t) + t)``.  Both drive the closed-form posterior update.
"""

import math

from scipy.special import erfcx

from ..errors import InvalidInputError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# Below this point Phi(t) is ~6e-16 and the direct ratio starts losing
# relative precision; the scaled erfc form is exact there.
TAIL_CROSSOVER = -8.0


def norm_pdf(t):
    return INV_SQRT_2PI * math.exp(-0.5 * t * t)


def norm_cdf(t):
    return 0.5 * math.erfc(-t / SQRT2)


def _check(t):
    if not math.isfinite(t):
        raise InvalidInputError(f"probit correction undefined for t={t!r}")


def v(t):
    """Additive mean correction ``N(t)/Phi(t)``; positive and decreasing."""
    _check(t)
    if t < TAIL_CROSSOVER:
        # N(t)/Phi(t) == sqrt(2/pi) / erfcx(-t/sqrt2), no underflow for t << 0
        return SQRT_2_OVER_PI / float(erfcx(-t / SQRT2))
    return norm_pdf(t) / norm_cdf(t)


def w(t):
    """Multiplicative variance correction, in (0, 1) for finite t."""
    vt = v(t)
    return vt * (vt + t)
