"""Simulator for Bluetooth proximity tracing and attacks mounted through an SDK."""

__version__ = "0.1.0"
