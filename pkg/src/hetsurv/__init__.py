"""Treatment-effect heterogeneity measures for right-censored survival data."""

from __future__ import annotations

__version__ = "0.1.0"
