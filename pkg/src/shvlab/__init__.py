"""Spectral-Galerkin laboratory for incompressible flow with
spectrally-selective damping on no-slip boxes."""

__version__ = "0.1.0"
