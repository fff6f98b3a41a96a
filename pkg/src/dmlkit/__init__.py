"""Debiased machine learning toolkit: high-dimensional regression,
cross-fitted causal estimators, weak-identification-robust inference,
sensitivity analysis, and heterogeneous-effect tooling."""

__version__ = "0.1.0"
