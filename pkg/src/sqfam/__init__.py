"""Squared families of probability distributions: kernels, densities, geometry and estimation."""

__version__ = "0.1.0"
