"""Curvature-variable hyperbolic modelling of temporal knowledge graphs."""

__version__ = "0.1.0"
