"""Discrete gradient-polyconvex elasticity with varifold cracks."""

__version__ = "0.1.0"
