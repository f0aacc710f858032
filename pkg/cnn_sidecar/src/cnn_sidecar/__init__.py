"""Scene-classification CNN sidecar for the morpholcz pipeline."""

__version__ = "0.1.0"
