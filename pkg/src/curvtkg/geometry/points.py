"""Validated point-level API over the Poincare and Lorentz kernels."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import lorentz, poincare

EPS_BALL = poincare.BALL_EPS
EPS_LORENTZ = 1e-6


class GeometryError(ValueError):
    """Invalid geometric input: model/curvature mismatch, non-finite or off-manifold data."""


class Model(enum.Enum):
    POINCARE = "poincare"
    LORENTZ = "lorentz"


@dataclass(frozen=True, eq=False)
class HPoint:
    """A point of a hyperbolic space with curvature ``curvature`` < 0.

    Poincare coordinates have length d; Lorentz coordinates length d + 1.
    """

    model: Model
    curvature: float
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "curvature", float(self.curvature))

    @property
    def dim(self) -> int:
        n = self.coords.shape[-1]
        return n - 1 if self.model is Model.LORENTZ else n

    def __repr__(self):
        return f"HPoint({self.model.value}, c={self.curvature:g}, {self.coords.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    at: HPoint
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


def _check_curvature(c: float) -> None:
    if not np.isfinite(c) or c >= 0:
        raise GeometryError(f"curvature must be finite and negative, got {c}")


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise GeometryError("non-finite coordinates")


def invariant_violation(x: HPoint) -> float:
    """How far x is from its manifold (0 when the invariant holds)."""
    if x.model is Model.POINCARE:
        excess = float(np.dot(x.coords, x.coords)) * -x.curvature - 1.0
        return max(excess, 0.0)
    k = -1.0 / x.curvature
    q = float(lorentz.inner(x.coords, x.coords, keepdims=False))
    scale = max(k, float(x.coords[0]) ** 2)
    return abs(q + k) / scale


def check_point(x: HPoint) -> HPoint:
    _check_curvature(x.curvature)
    _check_finite(x.coords)
    if x.model is Model.POINCARE:
        if float(np.dot(x.coords, x.coords)) >= -1.0 / x.curvature:
            raise GeometryError("point outside the Poincare ball")
    else:
        if x.coords.shape[-1] < 2:
            raise GeometryError("Lorentz coordinates need length >= 2")
        if x.coords[0] <= 0 or invariant_violation(x) > EPS_LORENTZ:
            raise GeometryError("point not on the upper hyperboloid sheet")
    return x


def _same_space(x: HPoint, y: HPoint) -> None:
    if x.model is not y.model:
        raise GeometryError(f"model mismatch: {x.model.value} vs {y.model.value}")
    if x.curvature != y.curvature:
        raise GeometryError(f"curvature mismatch: {x.curvature} vs {y.curvature}")
    if x.coords.shape != y.coords.shape:
        raise GeometryError("dimension mismatch")


def _require(x: HPoint, model: Model) -> None:
    if x.model is not model:
        raise GeometryError(f"expected a {model.value} point, got {x.model.value}")


def origin(model: Model, dim: int, c: float) -> HPoint:
    _check_curvature(c)
    if model is Model.POINCARE:
        return HPoint(model, c, np.zeros(dim))
    return HPoint(model, c, lorentz.origin(dim, c))


# --------------------------------------------------------------------------
# Poincare


def mobius_add(x: HPoint, y: HPoint) -> HPoint:
    check_point(x)
    check_point(y)
    _require(x, Model.POINCARE)
    _same_space(x, y)
    return HPoint(Model.POINCARE, x.curvature, poincare.mobius_add(x.coords, y.coords, x.curvature))


def mobius_matvec(m, x: HPoint) -> HPoint:
    check_point(x)
    _require(x, Model.POINCARE)
    m = np.asarray(m, dtype=np.float64)
    _check_finite(m)
    if m.ndim != 2 or m.shape[1] != x.coords.shape[-1]:
        raise GeometryError(f"matrix shape {m.shape} incompatible with dimension {x.dim}")
    return HPoint(Model.POINCARE, x.curvature, poincare.mobius_matvec(m, x.coords, x.curvature))


# --------------------------------------------------------------------------
# Lorentz


def minkowski_inner(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] < 2:
        raise GeometryError(f"minkowski_inner needs equal-length vectors of length >= 2, got {x.shape}, {y.shape}")
    return float(-x[0] * y[0] + np.dot(x[1:], y[1:]))


def _check_tangent(v: TangentVector) -> None:
    x = v.at
    check_point(x)
    _check_finite(v.coords)
    if v.coords.shape != x.coords.shape:
        raise GeometryError("tangent vector dimension mismatch")
    if x.model is Model.LORENTZ:
        q = abs(minkowski_inner(x.coords, v.coords))
        scale = max(1.0, float(np.linalg.norm(x.coords) * np.linalg.norm(v.coords)))
        if q > EPS_LORENTZ * scale:
            raise GeometryError(f"vector not tangent at base point (<x, v>_L = {q:.3e})")


def lorentz_exp(x: HPoint, v: TangentVector) -> HPoint:
    _require(x, Model.LORENTZ)
    if v.at is not x:
        _same_space(x, v.at)
    _check_tangent(TangentVector(x, v.coords))
    return HPoint(Model.LORENTZ, x.curvature, lorentz.expmap(x.coords, v.coords, x.curvature))


def lorentz_log(x: HPoint, y: HPoint) -> TangentVector:
    check_point(x)
    check_point(y)
    _require(x, Model.LORENTZ)
    _same_space(x, y)
    return TangentVector(x, lorentz.logmap(x.coords, y.coords, x.curvature))


def lorentz_distance(x: HPoint, y: HPoint) -> float:
    check_point(x)
    check_point(y)
    _require(x, Model.LORENTZ)
    _same_space(x, y)
    return float(lorentz.distance(x.coords, y.coords, x.curvature))


def parallel_transport_origin(x: HPoint, v: TangentVector) -> TangentVector:
    _require(x, Model.LORENTZ)
    check_point(x)
    o = origin(Model.LORENTZ, x.dim, x.curvature)
    _same_space(o, v.at)
    _check_tangent(TangentVector(o, v.coords))
    return TangentVector(x, lorentz.transport0(x.coords, v.coords, x.curvature))


def lorentz_add(x: HPoint, y: HPoint) -> HPoint:
    check_point(x)
    check_point(y)
    _require(x, Model.LORENTZ)
    _same_space(x, y)
    return HPoint(Model.LORENTZ, x.curvature, lorentz.add(x.coords, y.coords, x.curvature))


def lorentz_matvec(m, x: HPoint) -> HPoint:
    check_point(x)
    _require(x, Model.LORENTZ)
    m = np.asarray(m, dtype=np.float64)
    _check_finite(m)
    if m.ndim != 2 or m.shape[1] != x.dim:
        raise GeometryError(f"matrix shape {m.shape} incompatible with dimension {x.dim}")
    return HPoint(Model.LORENTZ, x.curvature, lorentz.matvec(m, x.coords, x.curvature))


# --------------------------------------------------------------------------
# curvature transitions


def lift(v, c: float, model: Model = Model.POINCARE) -> HPoint:
    """Read v as a tangent vector at the origin of curvature c and map it onto the manifold."""
    _check_curvature(c)
    v = np.asarray(v, dtype=np.float64)
    _check_finite(v)
    if model is Model.POINCARE:
        return HPoint(model, c, poincare.expmap0(v, c))
    return HPoint(model, c, lorentz.expmap0(v, c))


def drop(x: HPoint) -> np.ndarray:
    """Tangent coordinates at the origin (length d for both models)."""
    check_point(x)
    if x.model is Model.POINCARE:
        return np.asarray(poincare.logmap0(x.coords, x.curvature))
    return np.asarray(lorentz.logmap0(x.coords, x.curvature))


def transition(x: HPoint, c_to: float) -> HPoint:
    """Move x to curvature ``c_to`` through the tangent space at the origin."""
    if not np.isfinite(c_to) or c_to >= 0:
        raise GeometryError(f"target curvature must be negative, got {c_to}")
    if c_to == x.curvature:
        check_point(x)
        return x
    return lift(drop(x), c_to, x.model)
