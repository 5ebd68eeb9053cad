"""MOS prediction on top of frozen speech-encoder features."""

__version__ = "0.1.0"
