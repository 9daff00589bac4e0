"""Robust day-ahead dispatch for coupled electricity and gas-hydrogen networks."""

__version__ = "0.1.0"
