"""Numerical toolkit for Musielak-Orlicz modulars and truncation-based parabolic solves."""

__version__ = "0.1.0"
