"""Penalized regression estimators with residual and perturbation bootstrap inference."""
__version__ = "0.1.0"
