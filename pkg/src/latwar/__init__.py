"""Cyclic arbitrage detection and latency-war modeling for fixed-gas-price chains."""

__version__ = "0.1.0"
