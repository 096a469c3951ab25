"""Surrogate benchmark engine for cell-based neural architecture search."""

__version__ = "0.1.0"

from .space import Genotype, Op, SpaceConfig  # noqa: F401
