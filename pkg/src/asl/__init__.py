"""Active scalar laboratory on the periodic torus."""

__version__ = "0.1.0"
