"""Quantum autoencoder fraud detection by trash-qubit fidelity."""

__version__ = "0.1.0"
