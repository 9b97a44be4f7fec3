"""Adapted Wasserstein core components."""
