"""Axisymmetric swirl-flow solver in a two-scale zooming frame."""

__version__ = "0.1.0"
