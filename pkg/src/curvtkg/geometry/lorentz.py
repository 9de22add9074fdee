"""Lorentz-hyperboloid kernels.

Signature (-, +, ..., +) with the time coordinate at index 0. For curvature
c < 0 we write K = -1/c; points satisfy <x, x>_L = -K with x_0 > 0 and the
origin is o = (sqrt(K), 0, ..., 0).

Distances and logarithms are evaluated through arsinh of Minkowski norms,
which equals the arcosh form analytically but does not lose half the digits
near coincident points.
"""

import numpy as np

from .. import autodiff as ad

MIN_NORM = 1e-15
MIN_SQ = MIN_NORM * MIN_NORM
# geodesic distance from the origin is capped at this many curvature radii,
# the hyperboloid analogue of keeping Poincare points inside the ball
MAX_RADIUS = 20.0


def scale_k(c):
    """K = -1/c and sqrt(K)."""
    k = -1.0 / c
    return k, ad.sqrt(k)


def inner(x, y, keepdims: bool = True):
    """Minkowski inner product -x_0 y_0 + sum_{i>=1} x_i y_i along the last axis."""
    t = x[..., 0:1] * y[..., 0:1]
    s = ad.dot(x[..., 1:], y[..., 1:], keepdims=True)
    out = s - t
    return out if keepdims else out[..., 0]


def tangent_norm(v):
    return ad.sqrt(ad.maximum(inner(v, v), MIN_SQ))


def expmap(x, v, c):
    k, sk = scale_k(c)
    vn = tangent_norm(v)
    r = ad.minimum(vn / sk, MAX_RADIUS)
    return limit_radius(ad.cosh(r) * x + sk * ad.sinh(r) / vn * v, c)


def logmap(x, y, c):
    k, sk = scale_k(c)
    u = y + inner(x, y) / k * x
    un = tangent_norm(u)
    dist = sk * ad.arsinh(un / sk)
    return dist / un * u


def distance(x, y, c):
    """sqrt(K) arcosh(-<x, y>_L / K), computed as 2 sqrt(K) arsinh(|x - y|_L / (2 sqrt(K)))."""
    k, sk = scale_k(c)
    diff = x - y
    chord = ad.safe_sqrt(inner(diff, diff))
    return (2.0 * sk * ad.arsinh(chord / (2.0 * sk)))[..., 0]


def origin(dim: int, c):
    """Hyperboloid origin with ``dim`` spatial coordinates (numpy)."""
    o = np.zeros(dim + 1)
    o[0] = float(ad.value(scale_k(c)[1]))
    return o


def transport0(x, v, c):
    """Parallel transport of v from T_o to T_x:
    v + <x, v>_L / (K - <o, x>_L) (o + x)."""
    k, sk = scale_k(c)
    x0 = x[..., 0:1]
    coef = inner(x, v) / (k + sk * x0)
    time = v[..., 0:1] + coef * (x0 + sk)
    space = v[..., 1:] + coef * x[..., 1:]
    return ad.concat([time, space], axis=-1)


def expmap0(u, c):
    """exp_o of the tangent vector (0, u); ``u`` holds the d spatial coordinates."""
    k, sk = scale_k(c)
    n = ad.norm(u, floor=MIN_NORM)
    r = ad.minimum(n / sk, MAX_RADIUS)
    time = sk * ad.cosh(r)
    space = sk * ad.sinh(r) / n * u
    return ad.concat([time, space], axis=-1)


def logmap0(y, c):
    """Spatial coordinates of log_o(y) (its time component is identically 0)."""
    k, sk = scale_k(c)
    ys = y[..., 1:]
    n = ad.norm(ys, floor=MIN_NORM)
    return sk * ad.arsinh(n / sk) / n * ys


def add(x, y, c):
    """x (+) y = exp_x(P_{o->x}(log_o(y)))."""
    k, sk = scale_k(c)
    u = logmap0(y, c)
    x0 = x[..., 0:1]
    xs = x[..., 1:]
    coef = ad.dot(xs, u, keepdims=True) / (k + sk * x0)
    w = ad.concat([coef * (x0 + sk), u + coef * xs], axis=-1)
    return expmap(x, w, c)


def matvec(m, x, c):
    """M (x) x = exp_o(M log_o(x)) with M acting on the spatial coordinates."""
    return expmap0(logmap0(x, c) @ ad.transpose(m), c)


def limit_radius(x, c):
    """Pull points farther than MAX_RADIUS radii from the origin back onto that sphere."""
    k, sk = scale_k(c)
    xs = x[..., 1:]
    n = ad.norm(xs, floor=MIN_NORM)
    cap = sk * np.sinh(MAX_RADIUS)
    outside = ad.value(n) > ad.value(cap)
    if not outside.any():
        return x
    xs = xs * ad.where(outside, cap / n, 1.0)
    return ad.concat([ad.sqrt(k + ad.dot(xs, xs, keepdims=True)), xs], axis=-1)


def project(x, c):
    """Recompute x_0 from the spatial part so that <x, x>_L = -K exactly (up to rounding)."""
    k, _ = scale_k(c)
    xs = x[..., 1:]
    x0 = ad.sqrt(k + ad.dot(xs, xs, keepdims=True))
    return ad.concat([x0, xs], axis=-1)
