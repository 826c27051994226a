"""Splendor-like forward model, event-value functions, planning agents and NTBEA tuning."""

__version__ = "0.1.0"
