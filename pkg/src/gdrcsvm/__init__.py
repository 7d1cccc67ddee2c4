"""Distributionally robust SVM classifiers with generalised moment ambiguity sets."""

__version__ = "0.1.0"
