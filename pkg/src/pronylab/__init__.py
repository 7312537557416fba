"""High-precision Prony analysis, condition-number sweeps and potential recovery."""

__version__ = "0.1.0"
