"""Krackhardt hierarchy scores and learnable curvature schedules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .graphdata import SnapshotGraph

# softplus(raw) = 1 at this raw value, i.e. curvature -1.
UNIT_RAW = math.log(math.e - 1.0)
# Smallest admissible |c_t|; keeps K = -1/c finite for the Lorentz backend.
MIN_ABS_CURVATURE = 1e-6


def khs_fraction(edges: Iterable[tuple]) -> Fraction:
    """Krackhardt score of the relation-agnostic adjacency of ``edges``.

    ``edges`` holds (s, o) pairs or (s, r, o) triples. Returns
    sum_ij R_ij (1 - R_ji) / sum_ij R_ij, and 0 for an edgeless graph.
    """
    pairs = set()
    for e in edges:
        s, o = (e[0], e[2]) if len(e) == 3 else (e[0], e[1])
        pairs.add((s, o))
    if not pairs:
        return Fraction(0)
    asym = sum(1 for s, o in pairs if (o, s) not in pairs)
    return Fraction(asym, len(pairs))


def khs(graph: SnapshotGraph | Iterable[tuple]) -> float:
    edges = graph.edges if isinstance(graph, SnapshotGraph) else graph
    return float(khs_fraction(edges))


@dataclass
class KhsSeries:
    scores: list[float]
    mean: float  # NaN when no snapshot has edges


def khs_series(snapshots: Sequence[SnapshotGraph]) -> KhsSeries:
    scores = [khs(g) for g in snapshots]
    nonempty = [s for s, g in zip(scores, snapshots) if len(g)]
    return KhsSeries(scores, float(np.mean(nonempty)) if nonempty else math.nan)


class ScheduleKind(enum.Enum):
    CONSTANT = "constant"
    TIMESERIES = "timeseries"
    HIERSCORE = "hierscore"
    COMBINED = "combined"


def softplus_neg(z):
    """-max(softplus(z), MIN_ABS_CURVATURE): strictly negative."""
    return ad.neg(ad.maximum(ad.softplus(z), MIN_ABS_CURVATURE))


@dataclass
class CurvatureSchedule:
    """Curvature c_t as a function of timestamp and hierarchy score.

    ``params`` holds: ``const`` for CONSTANT; ``alpha``, ``beta``, ``gamma``,
    ``omega`` for the time-series part; ``poly`` (constant term first) for the
    hierarchy-score polynomial.
    """

    kind: ScheduleKind
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initial(cls, kind: ScheduleKind | str, degree: int = 1, omega: float = 0.1) -> "CurvatureSchedule":
        """Parameters giving c_t = -1 everywhere (time series with a nonzero frequency)."""
        kind = ScheduleKind(kind)
        p: dict[str, np.ndarray] = {}
        if kind is ScheduleKind.CONSTANT:
            p["const"] = np.array(UNIT_RAW)
        if kind in (ScheduleKind.TIMESERIES, ScheduleKind.COMBINED):
            p.update(alpha=np.array(0.0), beta=np.array(0.0),
                     gamma=np.array(UNIT_RAW), omega=np.array(omega))
        if kind is ScheduleKind.HIERSCORE:
            p["poly"] = np.zeros(degree + 1)
            p["poly"][0] = UNIT_RAW
        if kind is ScheduleKind.COMBINED:
            p["poly"] = np.zeros(degree + 1)
        return cls(kind, p)

    def evaluate(self, t, khs_t=0.0, params: Mapping | None = None):
        return schedule_eval(self.kind, self.params if params is None else params, t, khs_t)


def _poly(coef, x):
    """sum_i coef[i] x^i by Horner's rule (coef may be a tape variable)."""
    n = ad.value(coef).shape[0]
    acc = coef[n - 1]
    for i in range(n - 2, -1, -1):
        acc = acc * x + coef[i]
    return acc


def schedule_eval(kind: ScheduleKind | str, params: Mapping, t, khs_t=0.0):
    """Curvature at timestamp ``t`` given the snapshot's hierarchy score.

    constant:    -softplus(const)
    timeseries:  -softplus(alpha sin(omega t) + (beta t + gamma))
    hierscore:   -softplus(f(khs_t))
    combined:    -softplus(alpha sin(omega t) + (beta t + gamma) + f(khs_t))

    Returns a float, or a tape variable when any parameter is one.
    """
    kind = ScheduleKind(kind)
    if t < 0:
        raise ValueError(f"timestamp must be nonnegative, got {t}")
    t = float(t)
    if kind is ScheduleKind.CONSTANT:
        z = params["const"]
    elif kind is ScheduleKind.HIERSCORE:
        z = _poly(params["poly"], float(khs_t))
    else:
        z = params["alpha"] * ad.sin(params["omega"] * t) + (params["beta"] * t + params["gamma"])
        if kind is ScheduleKind.COMBINED:
            z = z + _poly(params["poly"], float(khs_t))
    c = softplus_neg(z)
    return c if ad.is_var(c) else float(c)


def global_curvature(raw):
    """The learnable curvature of the global representation: -softplus(raw)."""
    c = softplus_neg(raw)
    return c if ad.is_var(c) else float(c)
