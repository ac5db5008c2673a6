"""Exact conditional tests for Poisson and logistic regression with equally
spaced covariate levels, via explicit Markov-basis move sets."""

__version__ = "0.1.0"
