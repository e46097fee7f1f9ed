"""Numerical workbench for periodic wave trains of the KdV/Kuramoto-Sivashinsky
equation: traveling-wave profiles, Floquet-Bloch spectra, subharmonic semigroup
decay measurements, and nonlinear stability experiments on NT-periodic domains."""

__version__ = "0.1.0"
