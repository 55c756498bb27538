"""Scalar-flat conformal metrics with prescribed boundary mean curvature."""

from __future__ import annotations

__all__ = ["__version__"]

__version__ = "0.1.0"
