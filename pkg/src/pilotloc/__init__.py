"""Pilot-aided localisation and uplink decoding for drones seen by a rectangular array."""

__version__ = "0.1.0"
