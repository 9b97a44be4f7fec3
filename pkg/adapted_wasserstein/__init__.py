"""Adapted Wasserstein distances on scenario trees and hedging stability checks."""

__version__ = "0.1.0"
