"""Local Climate Zone prediction from urban morphometrics and imagery."""

__version__ = "0.1.0"
