"""Geometry-based stochastic channel model for V2V links in urban intersections."""

__version__ = "0.1.0"

SPEED_OF_LIGHT = 299792458.0
