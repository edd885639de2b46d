"""Numerical lab for the asymptotic stability of the 1D Klein-Gordon soliton."""

from __future__ import annotations

from .domain import FieldPair, Grid, ModelParams, energy, soliton_profile

__all__ = ["FieldPair", "Grid", "ModelParams", "energy", "soliton_profile"]
__version__ = "0.1.0"
