"""Markov chain aggregation by an error-corrected value-of-information criterion."""

__version__ = "0.1.0"
