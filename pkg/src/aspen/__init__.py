"""Adaptive spectral PINN for the complex Ginzburg-Landau equation."""

__version__ = "0.1.0"
