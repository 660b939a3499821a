"""Geometry and experiments for sublinearly Morse boundaries of a tree of flats."""

__version__ = "0.1.0"
