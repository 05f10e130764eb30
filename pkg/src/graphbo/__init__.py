"""Global Bayesian optimisation over partially observed graphs."""

__version__ = "0.1.0"
