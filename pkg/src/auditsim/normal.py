"""Standard normal CDF, PDF and inverse CDF at double precision.

The CDF is computed through the complementary error function,
``Phi(x) = erfc(-x / sqrt(2)) / 2``, which keeps relative accuracy in the
far tails where ``1 - Phi`` style formulas cancel. The inverse CDF uses a
rational initial guess (Acklam's coefficients) polished by one Newton step
through the erfc-based CDF, which lands within a few ulp over the full
open interval. Accuracy is certified against a 40-digit reference in the
verification suite.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

SQRT2 = float(np.sqrt(2.0))
INV_SQRT_2PI = 1.0 / float(np.sqrt(2.0 * np.pi))

# Rational approximation coefficients for the inverse CDF initializer.
_PPF_A = (
    -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
    1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00,
)
_PPF_B = (
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01,
)
_PPF_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00,
)
_PPF_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e+00, 3.754408661907416e+00,
)
_PPF_P_LOW = 0.02425


def normal_cdf(x):
    """Standard normal CDF, accurate to ~1 ulp on [-8, 8] and beyond."""
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * _sp.erfc(-x / SQRT2)
    return out if out.ndim else float(out)


def normal_sf(x):
    """Upper tail probability 1 - Phi(x) without cancellation."""
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * _sp.erfc(x / SQRT2)
    return out if out.ndim else float(out)


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=np.float64)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return out if out.ndim else float(out)


def _ppf_initial(p):
    """Acklam's rational approximation, ~1.2e-9 relative error."""
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    q = np.where(p < 0.5, p, 1.0 - p)
    out = np.empty_like(q)

    tail = q < _PPF_P_LOW
    if np.any(tail):
        r = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]
        den = (((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0
        out[tail] = num / den
    mid = ~tail
    if np.any(mid):
        r = q[mid] - 0.5
        s = r * r
        num = ((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]
        den = ((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0
        out[mid] = r * num / den
    return np.where(p < 0.5, out, -out)


def normal_ppf(p):
    """Inverse standard normal CDF on the open interval (0, 1).

    Raises ValueError for arguments outside (0, 1); the endpoints are not
    representable and almost always indicate an upstream bug.
    """
    scalar = np.isscalar(p) or getattr(p, "ndim", 1) == 0
    arr = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("normal_ppf requires probabilities strictly inside (0, 1)")
    x = _ppf_initial(arr)
    # One Newton step through the erfc-based CDF; the initializer is within
    # ~1e-9 so a single step reaches double precision. The residual is taken
    # against the lower tail for p < 0.5 and against the survival function
    # otherwise (1 - p is exact there), keeping both tails cancellation-free.
    lower = arr < 0.5
    # Both branches are cdf(x) - p; the upper one evaluates it through the
    # survival function where 1 - p is exact, avoiding cancellation at 1.
    resid = np.where(lower,
                     0.5 * _sp.erfc(-x / SQRT2) - arr,
                     (1.0 - arr) - 0.5 * _sp.erfc(x / SQRT2))
    dens = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    # The density underflows around |x| ~ 38.6 (p below ~1e-308); there the
    # rational initializer's ~1e-9 relative accuracy already stands.
    x = np.where(dens > 0.0, x - resid / np.where(dens > 0.0, dens, 1.0), x)
    return float(x[0]) if scalar else x


#: Hiring standard that yields a 15% callback rate at zero composite noise.
THRESHOLD_15PCT = normal_ppf(0.85)
