"""Desk-scale soccer-robot perception and decision stack."""

from .field_model import FieldPose, FieldSpec, GridIndex, load_default_field

__all__ = ["FieldPose", "FieldSpec", "GridIndex", "load_default_field"]
__version__ = "0.1.0"
