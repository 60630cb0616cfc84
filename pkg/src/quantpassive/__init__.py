"""Event-triggered quantized coordination and synchronization of passive agents."""

__version__ = "0.1.0"
