"""Anisotropic Heat Kernel - sharp Gaussian bounds for fourth-order operators in 2D."""

__version__ = "1.0.0"
