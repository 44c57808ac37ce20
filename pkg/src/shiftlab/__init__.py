"""Desk-scale toolkit for adapting classifiers across domain and semantic shift."""

__version__ = "0.1.0"
