"""Coordinated distribution-grid / EV traffic optimization with decentralized solvers."""

__version__ = "0.1.0"
