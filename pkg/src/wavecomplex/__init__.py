"""Wavelet-domain hidden Markov tree complexity, denoising and basis selection."""

__version__ = "0.1.0"
