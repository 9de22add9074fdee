"""Randomized property suite for the geometry kernels.

Each check draws ``cases`` random instances at once (one random curvature
per instance) and reports the worst error against its tolerance. The suite
backs both the ``selftest`` command and the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lorentz, poincare

ROUND_TRIP_TOL = 1e-8
METRIC_SLACK = 1e-9


@dataclass
class PropertyResult:
    name: str
    cases: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def line(self) -> str:
        return f"{self.name}\t{self.cases}\t{self.max_error:.3e}\t{'pass' if self.passed else 'FAIL'}"


def _scaled_err(a, b):
    """Rowwise max |a - b| / max(1, |b|)."""
    a, b = np.asarray(a), np.asarray(b)
    diff = np.abs(a - b).reshape(a.shape[0], -1).max(axis=1)
    scale = np.maximum(1.0, np.abs(b).reshape(b.shape[0], -1).max(axis=1))
    return float((diff / scale).max())


class _Sampler:
    def __init__(self, rng: np.random.Generator, n: int, dim: int):
        self.rng, self.n, self.dim = rng, n, dim
        # log-uniform curvature magnitudes in [0.05, 5]
        self.c = -np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=(n, 1)))

    def tangent(self, max_geo: float = 3.0):
        """Tangent vectors with geodesic length up to ``max_geo`` curvature radii."""
        d = self.rng.normal(size=(self.n, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.rng.uniform(0.0, max_geo, size=(self.n, 1)) / np.sqrt(-self.c)
        return d * r

    def ball(self, max_geo: float = 3.0):
        return poincare.expmap0(self.tangent(max_geo), self.c)

    def hyperboloid(self, max_geo: float = 3.0):
        return lorentz.expmap0(self.tangent(max_geo), self.c)

    def tangent_at(self, x, max_geo: float = 2.0):
        """Random tangent vectors at hyperboloid points ``x`` (transported from the origin)."""
        u = self.tangent(max_geo)
        v0 = np.concatenate([np.zeros((self.n, 1)), u], axis=1)
        return lorentz.transport0(x, v0, self.c)


def poincare_properties(cases: int = 10_000, dim: int = 5, seed: int = 0) -> list[PropertyResult]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1])))
    sp = _Sampler(rng, cases, dim)
    c = sp.c
    x, y, z = sp.ball(), sp.ball(), sp.ball()
    zero = np.zeros_like(x)
    out = [
        PropertyResult("poincare.add_identity", cases,
                       max(_scaled_err(poincare.mobius_add(x, zero, c), x),
                           _scaled_err(poincare.mobius_add(zero, x, c), x)), ROUND_TRIP_TOL),
        PropertyResult("poincare.add_inverse", cases,
                       _scaled_err(poincare.mobius_add(-x, x, c) * np.sqrt(-c), zero), ROUND_TRIP_TOL),
    ]
    v = sp.tangent()
    out.append(PropertyResult("poincare.log_exp", cases,
                              _scaled_err(poincare.logmap0(poincare.expmap0(v, c), c), v), ROUND_TRIP_TOL))
    out.append(PropertyResult("poincare.exp_log", cases,
                              _scaled_err(poincare.expmap0(poincare.logmap0(x, c), c), x), ROUND_TRIP_TOL))
    dxy, dyx = poincare.distance(x, y, c), poincare.distance(y, x, c)
    dxz, dyz = poincare.distance(x, z, c), poincare.distance(y, z, c)
    dxx = poincare.distance(x, x, c)
    metric = max(float(np.abs(dxx).max()), float(np.abs(dxy - dyx).max()),
                 float(np.maximum(-dxy, 0).max()), float(np.maximum(dxz - dxy - dyz, 0).max()))
    out.append(PropertyResult("poincare.metric_axioms", cases, metric, METRIC_SLACK))
    c2 = -np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=(cases, 1)))
    c3 = -np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=(cases, 1)))

    # keep the tangent norm within 3 curvature radii at every curvature involved
    kmax = np.maximum(np.maximum(-c, -c2), -c3)
    w = sp.tangent() * np.sqrt(-c / kmax)
    p0 = poincare.expmap0(w, c)

    def trans(p, a, b):
        return poincare.expmap0(poincare.logmap0(p, a), b)

    out.append(PropertyResult("poincare.transition_composition", cases,
                              max(_scaled_err(trans(trans(p0, c, c2), c2, c3), trans(p0, c, c3)),
                                  _scaled_err(trans(trans(p0, c, c2), c2, c), p0)), ROUND_TRIP_TOL))
    return out


def lorentz_properties(cases: int = 10_000, dim: int = 5, seed: int = 0) -> list[PropertyResult]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 2])))
    sp = _Sampler(rng, cases, dim)
    c = sp.c
    k = -1.0 / c
    x, y, z = sp.hyperboloid(), sp.hyperboloid(), sp.hyperboloid()
    o = np.zeros_like(x)
    o[:, :1] = np.sqrt(k)
    out = [
        PropertyResult("lorentz.add_identity", cases,
                       max(_scaled_err(lorentz.add(x, o, c), x),
                           _scaled_err(lorentz.add(o, x, c), x)), ROUND_TRIP_TOL),
    ]
    # the inverse of x is exp_x of the transported -log_o x, which is the origin
    minus = x * np.concatenate([np.ones((cases, 1)), -np.ones((cases, dim))], axis=1)
    out.append(PropertyResult("lorentz.add_inverse", cases,
                              _scaled_err(lorentz.add(x, minus, c) / np.sqrt(k), o / np.sqrt(k)),
                              ROUND_TRIP_TOL))
    v = sp.tangent_at(x)
    v_back = lorentz.logmap(x, lorentz.expmap(x, v, c), c)
    out.append(PropertyResult("lorentz.log_exp", cases, _scaled_err(v_back, v), ROUND_TRIP_TOL))
    out.append(PropertyResult("lorentz.exp_log", cases,
                              _scaled_err(lorentz.expmap(x, lorentz.logmap(x, y, c), c), y), ROUND_TRIP_TOL))
    u = sp.tangent()
    out.append(PropertyResult("lorentz.log0_exp0", cases,
                              _scaled_err(lorentz.logmap0(lorentz.expmap0(u, c), c), u), ROUND_TRIP_TOL))
    dxy, dyx = lorentz.distance(x, y, c), lorentz.distance(y, x, c)
    dxz, dyz = lorentz.distance(x, z, c), lorentz.distance(y, z, c)
    dxx = lorentz.distance(x, x, c)
    metric = max(float(np.abs(dxx).max()), float(np.abs(dxy - dyx).max()),
                 float(np.maximum(-dxy, 0).max()), float(np.maximum(dxz - dxy - dyz, 0).max()))
    out.append(PropertyResult("lorentz.metric_axioms", cases, metric, METRIC_SLACK))
    # transport from the origin preserves Minkowski inner products and lands in T_x
    a = np.concatenate([np.zeros((cases, 1)), sp.tangent()], axis=1)
    b = np.concatenate([np.zeros((cases, 1)), sp.tangent()], axis=1)
    pa, pb = lorentz.transport0(x, a, c), lorentz.transport0(x, b, c)
    iso = max(_scaled_err(lorentz.inner(pa, pb), lorentz.inner(a, b)),
              _scaled_err(lorentz.inner(x, pa) / np.sqrt(k), np.zeros((cases, 1))))
    out.append(PropertyResult("lorentz.transport_isometry", cases, iso, ROUND_TRIP_TOL))
    c2 = -np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=(cases, 1)))
    c3 = -np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=(cases, 1)))

    # keep the tangent norm within 3 curvature radii at every curvature involved
    kmax = np.maximum(np.maximum(-c, -c2), -c3)
    w = sp.tangent() * np.sqrt(-c / kmax)
    p0 = lorentz.expmap0(w, c)

    def trans(p, a, b):
        return lorentz.expmap0(lorentz.logmap0(p, a), b)

    out.append(PropertyResult("lorentz.transition_composition", cases,
                              max(_scaled_err(trans(trans(p0, c, c2), c2, c3), trans(p0, c, c3)),
                                  _scaled_err(trans(trans(p0, c, c2), c2, c), p0)), ROUND_TRIP_TOL))
    return out


def run_all(cases: int = 10_000, dim: int = 5, seed: int = 0) -> list[PropertyResult]:
    return poincare_properties(cases, dim, seed) + lorentz_properties(cases, dim, seed)
