"""Level-crossing analysis of translationally invariant spin chains."""

__version__ = "0.1.0"
