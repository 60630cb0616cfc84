"""Uniform quantizer, its Krasowskii regularization and the associated potential."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# |r/delta + 1/2 - round(r/delta + 1/2)| below this counts as "on a boundary".
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class KrasowskiiValue:
    """Closed interval ``[lower, upper]``; degenerate away from quantizer boundaries."""

    lower: float
    upper: float

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper

    @property
    def degenerate(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True)
class TargetBox:
    """The box ``[-half_width, half_width]^dimension``."""

    half_width: float
    dimension: int

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float).reshape(-1)
        return bool(np.all(np.abs(z) <= self.half_width + tol))


def _finite(r):
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("quantizer input must be finite")
    return arr


@dataclass(frozen=True)
class UniformQuantizer:
    """``q(r) = delta * floor(r / delta + 1/2)``.

    Exact half-step points round up, so ``q(delta/2) = delta`` and
    ``q(-delta/2) = 0``.
    """

    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be a positive finite number, got {self.delta!r}")
        object.__setattr__(self, "delta", float(self.delta))

    # -- levels ---------------------------------------------------------
    def level_index(self, r):
        """Integer ``m`` with ``q(r) = m * delta``."""
        return np.floor(_finite(r) / self.delta + 0.5).astype(np.int64)

    def quantize_scalar(self, r: float) -> float:
        return float(self.delta * np.floor(float(_finite(r)) / self.delta + 0.5))

    def quantize_vector(self, z) -> np.ndarray:
        z = _finite(z)
        return self.delta * np.floor(z / self.delta + 0.5)

    __call__ = quantize_vector

    def target_box(self, dimension: int) -> TargetBox:
        return TargetBox(self.delta / 2.0, dimension)

    # -- set-valued regularization ---------------------------------------
    def on_boundary(self, r) -> np.ndarray:
        s = _finite(r) / self.delta + 0.5
        return np.abs(s - np.round(s)) < BOUNDARY_TOL

    def krasowskii_set(self, r: float) -> KrasowskiiValue:
        s = float(_finite(r)) / self.delta + 0.5
        if abs(s - round(s)) < BOUNDARY_TOL:
            m = round(s) - 1
            return KrasowskiiValue(m * self.delta, (m + 1) * self.delta)
        level = self.delta * np.floor(s)
        return KrasowskiiValue(level, level)

    def krasowskii_bounds(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized componentwise ``(lower, upper)`` of the Krasowskii sets."""
        s = _finite(z) / self.delta + 0.5
        edge = np.abs(s - np.round(s)) < BOUNDARY_TOL
        lo = np.where(edge, np.round(s) - 1, np.floor(s)) * self.delta
        hi = np.where(edge, np.round(s), np.floor(s)) * self.delta
        return lo, hi

    # -- potential --------------------------------------------------------
    def potential(self, z) -> float:
        """Sum over components of the integral of ``q`` from 0 to ``z_j``.

        The integrand differs from an odd function only on a null set, so
        the integral depends on ``|z_j|`` alone.
        """
        return float(np.sum(self.potential_components(z)))

    def potential_components(self, z) -> np.ndarray:
        d = self.delta
        r = np.abs(_finite(z))
        m = np.floor(r / d + 0.5)
        return np.where(m >= 1, d * d * m * (m - 1) / 2.0 + m * d * (r - (m - 0.5) * d), 0.0)

    def zero_in_clarke_gradient(self, z) -> bool:
        lo, hi = self.krasowskii_bounds(np.atleast_1d(z))
        return bool(np.all((lo <= 0.0) & (hi >= 0.0)))

    # -- event helpers ------------------------------------------------------
    def next_boundary(self, r: float, direction: int) -> float:
        """Nearest half-step point strictly beyond ``r`` in ``direction``."""
        x = float(_finite(r)) / self.delta - 0.5
        if direction > 0:
            m = np.floor(x) + 1
        elif direction < 0:
            m = np.ceil(x) - 1
        else:
            raise ValueError("direction must be +1 or -1")
        return float((m + 0.5) * self.delta)

    def cell(self, level_index):
        """Boundaries ``((m - 1/2) delta, (m + 1/2) delta)`` of the cell of level ``m``."""
        m = np.asarray(level_index, dtype=float)
        return (m - 0.5) * self.delta, (m + 0.5) * self.delta
