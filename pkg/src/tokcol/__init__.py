"""Token collision detection in anonymous CONGEST networks."""

__version__ = "0.1.0"
