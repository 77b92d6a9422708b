"""Numerical laboratory for exact finite-size multipoint distributions of the
periodic TASEP and for the limiting periodic KPZ fixed point distributions."""

__version__ = "0.1.0"
