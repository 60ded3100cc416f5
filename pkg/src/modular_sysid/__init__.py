"""Modular identification of systems composed through a resource-sharing map."""

__version__ = "0.1.0"
