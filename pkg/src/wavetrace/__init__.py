"""Semiclassical analysis of rotating shallow-water waves on a variable Coriolis background."""

__version__ = "0.1.0"
