"""Timing analysis of DNS responses and timing-based detection of spoofed answers."""

from dnstiming.levels import DnsLevel, Label

__version__ = "0.1.0"

__all__ = ["DnsLevel", "Label", "__version__"]
