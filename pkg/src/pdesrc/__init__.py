"""Inverse source recovery for PDE-driven fields sampled by sensor networks."""

from .domain import Box, DomainScaling, SensorNetwork, SourceSet, UniformGrid
from .greens import FieldKind, FieldModel, FilterKind, TemporalFilter

__version__ = "0.1.0"

__all__ = [
    "Box",
    "DomainScaling",
    "FieldKind",
    "FieldModel",
    "FilterKind",
    "SensorNetwork",
    "SourceSet",
    "TemporalFilter",
    "UniformGrid",
    "__version__",
]
