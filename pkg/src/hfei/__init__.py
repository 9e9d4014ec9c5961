"""Weekly activity index from mixed-frequency data with a Bayesian dynamic factor model."""

__version__ = "0.1.0"
