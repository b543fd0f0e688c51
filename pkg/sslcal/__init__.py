"""sslcal: calibration lab for pseudo-label semi-supervised learning."""

__version__ = "0.1.0"
