"""soisim: self-organizing interaction spaces library and simulator."""

__version__ = "0.1.0"

