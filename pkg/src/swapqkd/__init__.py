"""Entanglement swapping between independent time-bin pair sources, with
finite-key analysis of the resulting key."""

__version__ = "0.1.0"
