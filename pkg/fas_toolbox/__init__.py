"""Artifact pattern conversion and patch-based multi-task learning for face anti-spoofing."""

__version__ = "0.0.0.dev"
