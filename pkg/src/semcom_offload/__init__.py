"""Prompt-generation offloading and resource allocation for edge-device semantic communication."""

__version__ = "0.1.0"
