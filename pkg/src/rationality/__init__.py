"""Executable rational decision theory: contracts, elicited beliefs, and mixture agents."""

__version__ = "0.1.0"
