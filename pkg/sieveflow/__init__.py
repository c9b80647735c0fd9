"""Stationary Navier-Stokes flow through a perforated sieve, driven by a Bernoulli-pressure drop."""

__version__ = "0.1.0"
