"""Fast kernel RX anomaly detection."""

__version__ = "0.1.0"
