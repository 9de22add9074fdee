"""Hyperbolic geometry: Poincare ball and Lorentz hyperboloid with variable curvature."""

from .manifolds import BACKENDS, LorentzModel, PoincareBall, get_backend
from .points import (
    EPS_BALL,
    EPS_LORENTZ,
    GeometryError,
    HPoint,
    Model,
    TangentVector,
    check_point,
    drop,
    invariant_violation,
    lift,
    lorentz_add,
    lorentz_distance,
    lorentz_exp,
    lorentz_log,
    lorentz_matvec,
    minkowski_inner,
    mobius_add,
    mobius_matvec,
    origin,
    parallel_transport_origin,
    transition,
)

__all__ = [
    "BACKENDS", "LorentzModel", "PoincareBall", "get_backend",
    "EPS_BALL", "EPS_LORENTZ", "GeometryError", "HPoint", "Model", "TangentVector",
    "check_point", "drop", "invariant_violation", "lift", "lorentz_add",
    "lorentz_distance", "lorentz_exp", "lorentz_log", "lorentz_matvec",
    "minkowski_inner", "mobius_add", "mobius_matvec", "origin",
    "parallel_transport_origin", "transition",
]
