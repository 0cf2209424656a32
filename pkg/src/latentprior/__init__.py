"""Gaussian latent priors for generator inversion and artifact correction,
built around a small deterministic style-based toy generator."""

__version__ = "0.1.0"
