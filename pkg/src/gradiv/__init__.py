"""Modular grad-div stabilized Navier-Stokes solver on triangles."""

__version__ = "0.1.0"
