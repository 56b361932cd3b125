"""Simulation of UCA-based OAM radio links and learning-based OAM mode detection."""

__version__ = "0.1.0"
