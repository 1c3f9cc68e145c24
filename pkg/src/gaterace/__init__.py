"""Vision-only autonomous drone racing: perception, control and simulation."""

__version__ = "0.1.0"
