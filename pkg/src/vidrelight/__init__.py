"""Training-free video relighting inside a linear light-transport world."""

__version__ = "0.1.0"
