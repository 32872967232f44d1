"""Desk-scale digital quantum simulation toolkit."""

__version__ = "1.0.0"
