"""Per-correspondence losses applied to reprojection distances (pixels)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SquaredLoss:
    """``L(r) = r**2``."""

    name = "squared"

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return r * r

    def irls_weight(self, r):
        return np.ones_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class CauchyLoss:
    """``L(r) = ln(1 + (r / scale)**2)``.

    The IRLS weight is ``1 / (1 + (r / scale)**2)``, i.e. ``L'(r) / r`` up to
    the constant ``2 / scale**2`` that cancels in the normal equations.
    """

    scale: float = 1.0
    name = "cauchy"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"Cauchy scale must be positive, got {self.scale}")

    def value(self, r):
        z = np.asarray(r, dtype=float) / self.scale
        return np.log1p(z * z)

    def irls_weight(self, r):
        z = np.asarray(r, dtype=float) / self.scale
        return 1.0 / (1.0 + z * z)


def loss_value_and_weight(kind, r):
    """``(L(r), irls_weight(r))`` for a scalar residual norm ``r >= 0``."""
    if r < 0:
        raise ValueError("residual norm must be non-negative")
    return float(kind.value(r)), float(kind.irls_weight(r))


def make_loss(name, scale=1.0):
    name = name.lower()
    if name in ("squared", "standard", "l2"):
        return SquaredLoss()
    if name == "cauchy":
        return CauchyLoss(scale)
    raise ValueError(f"unknown loss {name!r}")
