"""Boundary-controlled dynamical Dirac systems: forward solves, response and
Weyl functions, accelerants, and recovery of the potential from the response."""

__version__ = "0.1.0"
