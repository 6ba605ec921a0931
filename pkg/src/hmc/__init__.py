"""Refinement-type constraint solving by reduction to imperative program safety."""

__version__ = "0.1.0"
