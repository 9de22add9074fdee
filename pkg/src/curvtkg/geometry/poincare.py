"""Poincare-ball kernels for curvature c < 0.

All functions act on the last axis and broadcast over leading axes. The
curvature may be a float or a scalar tape variable.
"""

from .. import autodiff as ad

MIN_NORM = 1e-15
BALL_EPS = 1e-5
MIN_DENOM = 1e-15


def _sqrt_k(c):
    return ad.sqrt(ad.neg(c))


def project(x, c):
    """Pull points back inside radius (1 - BALL_EPS) / sqrt(-c)."""
    maxnorm = (1.0 - BALL_EPS) / _sqrt_k(c)
    n = ad.norm(x, floor=MIN_NORM)
    outside = ad.value(n) > ad.value(maxnorm)
    if not outside.any():
        return x
    return x * ad.where(outside, maxnorm / n, 1.0)


def mobius_add(x, y, c):
    xy = ad.dot(x, y, keepdims=True)
    x2 = ad.dot(x, x, keepdims=True)
    y2 = ad.dot(y, y, keepdims=True)
    num = (1.0 - 2.0 * c * xy - c * y2) * x + (1.0 + c * x2) * y
    den = 1.0 - 2.0 * c * xy + c * c * x2 * y2
    return project(num / ad.maximum(den, MIN_DENOM), c)


def mobius_matvec(m, x, c):
    """M (x) x for a (d_out, d_in) matrix; Mx = 0 gives the origin."""
    sk = _sqrt_k(c)
    mx = x @ ad.transpose(m)
    xn = ad.norm(x, floor=MIN_NORM)
    mxn = ad.norm(mx, floor=MIN_NORM)
    scale = ad.tanh(mxn / xn * ad.arctanh(sk * xn)) / (mxn * sk)
    return project(scale * mx, c)


def expmap0(v, c):
    """Exponential map at the origin: tanh(sqrt(k)|v|) v / (sqrt(k)|v|)."""
    sk = _sqrt_k(c)
    n = ad.norm(v, floor=MIN_NORM)
    return project(ad.tanh(sk * n) / (sk * n) * v, c)


def logmap0(y, c):
    """Logarithmic map at the origin; inverse of :func:`expmap0`."""
    sk = _sqrt_k(c)
    n = ad.norm(y, floor=MIN_NORM)
    return ad.arctanh(sk * n) / (sk * n) * y


def distance(x, y, c):
    """2/sqrt(k) artanh(sqrt(k) |(-x) (+) y|)."""
    sk = _sqrt_k(c)
    n = ad.norm(mobius_add(ad.neg(x), y, c))
    return (2.0 / sk * ad.arctanh(sk * n))[..., 0]
