"""Procedural olive-canopy scenes rendered to aligned image/mask pairs, with companion scoring tools."""

__version__ = "0.1.0"
