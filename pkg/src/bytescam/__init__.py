"""Scam detection for EVM smart contracts from bytecode n-grams."""

__version__ = "0.1.0"
