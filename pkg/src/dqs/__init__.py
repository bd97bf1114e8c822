"""Short quantum circuits for digital quantum simulation found by deep Q-learning."""

__version__ = "0.1.0"
