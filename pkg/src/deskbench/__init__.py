"""Desk-scale closed-loop benchmark for driving motion planners."""

__version__ = "0.1.0"
