"""Nuisance learners: hazards, propensities, regressions, and effect models."""

from __future__ import annotations

from .step import StepCumHazard

__all__ = ["StepCumHazard"]
