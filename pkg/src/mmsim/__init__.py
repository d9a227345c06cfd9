"""System-level simulator for multi-sector, multi-panel mmWave cellular networks."""

__version__ = "0.1.0"
