"""Diffeomorphic image registration with a Gauss-Newton-Krylov solver."""
__version__ = "0.1.0"
