"""Badminton hit-frame detection from broadcast video artefacts."""

__version__ = "0.1.0"
