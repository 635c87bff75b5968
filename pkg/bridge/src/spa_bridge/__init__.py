"""Thin exporter feeding real backbone activations and annotations into the
spa toolkit's SPT tensor and annotation JSON formats."""

__version__ = "0.1.0"
