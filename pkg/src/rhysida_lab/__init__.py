"""Desk-scale laboratory for the Rhysida encryption pipeline and its
seed-regeneration decryption method."""

__version__ = "0.1.0"
