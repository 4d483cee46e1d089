"""Numerical toolkit for the weighted one-phase Bernoulli problem of
axisymmetric gravity water waves: minimizers, Weiss energy, blow-ups and
flatness-based regularity diagnostics on uniform grids."""

__version__ = "0.1.0"
