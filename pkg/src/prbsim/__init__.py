"""Single-cell 5G downlink simulator with learned PRB and power control."""

__version__ = "0.1.0"
