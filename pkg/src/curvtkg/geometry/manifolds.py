"""Backend objects used by the model: one per hyperbolic model.

Both expose the same tangent-at-origin interface (``lift``/``drop`` on
d-dimensional vectors), so the recurrent model is written once.
"""

from __future__ import annotations

from . import lorentz, poincare
from .points import Model


class PoincareBall:
    model = Model.POINCARE

    @staticmethod
    def point_dim(d: int) -> int:
        return d

    @staticmethod
    def lift(v, c):
        return poincare.expmap0(v, c)

    @staticmethod
    def drop(x, c):
        return poincare.logmap0(x, c)

    @staticmethod
    def add(x, y, c):
        return poincare.mobius_add(x, y, c)

    @staticmethod
    def matvec(m, x, c):
        return poincare.mobius_matvec(m, x, c)

    @staticmethod
    def transition(x, c_from, c_to):
        return poincare.expmap0(poincare.logmap0(x, c_from), c_to)

    @staticmethod
    def euclidean_part(x):
        return x


class LorentzModel:
    model = Model.LORENTZ

    @staticmethod
    def point_dim(d: int) -> int:
        return d + 1

    @staticmethod
    def lift(v, c):
        return lorentz.expmap0(v, c)

    @staticmethod
    def drop(x, c):
        return lorentz.logmap0(x, c)

    @staticmethod
    def add(x, y, c):
        return lorentz.add(x, y, c)

    @staticmethod
    def matvec(m, x, c):
        return lorentz.matvec(m, x, c)

    @staticmethod
    def transition(x, c_from, c_to):
        return lorentz.expmap0(lorentz.logmap0(x, c_from), c_to)

    @staticmethod
    def euclidean_part(x):
        return x[..., 1:]


BACKENDS = {"poincare": PoincareBall, "lorentz": LorentzModel}


def get_backend(name: str):
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
