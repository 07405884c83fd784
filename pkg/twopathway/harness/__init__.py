"""Experiment harness: artifact caching, sweeps, run registry and CLI commands."""
