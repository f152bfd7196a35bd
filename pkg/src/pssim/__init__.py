"""Open-system simulator for projected squeezed and macroscopic superposition states."""

__version__ = "0.1.0"
