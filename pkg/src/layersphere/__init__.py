"""Molecular diffusion through a layered sphere: analytic and particle models."""

from .medium import Layer, LayerStack, SourceSpec, ValidationError, spheroid_stack

__all__ = ["Layer", "LayerStack", "SourceSpec", "ValidationError", "spheroid_stack"]
__version__ = "0.1.0"
