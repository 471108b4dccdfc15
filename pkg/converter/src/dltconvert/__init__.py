"""Checkpoint converter: standard pretrained encoders -> DLT bundles."""

from .exporter import ConversionManifest, export_checkpoint
from .families import ExportError

__version__ = "0.1.0"
