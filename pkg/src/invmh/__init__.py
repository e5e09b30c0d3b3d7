"""Involutive Metropolis-Hastings sampling with adversarially trained
time-reversible proposal networks, an HMC baseline, and convergence
diagnostics."""

__version__ = "0.1.0"
