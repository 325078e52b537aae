"""Distributional regression with cubic smoothing splines."""
__version__ = "0.1.0"
