"""Numerical laboratory for weak inverse mean curvature flow in rotational symmetry."""
__version__ = "0.1.0"
