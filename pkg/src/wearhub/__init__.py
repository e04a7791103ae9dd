"""wearhub: a device-agnostic hub for synchronized wearable data collection."""

__version__ = "0.1.0"
