"""Stacked decision variables: n per-node blocks of equal dimension d.

A :class:`StackedPoint` is the joint variable x = [x_1, ..., x_n] of the
penalized problem, stored as an (n, d) float array.  All vector-space
operations act blockwise; nothing here ever mixes data across blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class StackedPoint:
    """n blocks of dimension d, stored row-wise in an (n, d) float array.

    Treated as immutable by convention: arithmetic returns new instances
    and callers must not mutate ``blocks`` in place.
    """

    blocks: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.blocks, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected an (n, d) array, got shape {arr.shape}")
        self.blocks = arr

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def d(self) -> int:
        return self.blocks.shape[1]

    @classmethod
    def zeros(cls, n: int, d: int) -> "StackedPoint":
        return cls(np.zeros((n, d)))

    @classmethod
    def stack(cls, blocks) -> "StackedPoint":
        """Build from an iterable of n equal-length block vectors."""
        return cls(np.array([np.asarray(b, dtype=float).ravel() for b in blocks]))

    @classmethod
    def consensual(cls, n: int, v) -> "StackedPoint":
        """All n blocks equal to the vector v (a point in Ker W)."""
        v = np.asarray(v, dtype=float).ravel()
        return cls(np.tile(v, (n, 1)))

    def block(self, k: int) -> np.ndarray:
        """Read-only copy of block k (node-local view)."""
        return self.blocks[k].copy()

    def copy(self) -> "StackedPoint":
        return StackedPoint(self.blocks.copy())

    def __add__(self, other: "StackedPoint") -> "StackedPoint":
        return StackedPoint(self.blocks + other.blocks)

    def __sub__(self, other: "StackedPoint") -> "StackedPoint":
        return StackedPoint(self.blocks - other.blocks)

    def __mul__(self, scalar: float) -> "StackedPoint":
        return StackedPoint(self.blocks * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "StackedPoint":
        return StackedPoint(-self.blocks)

    def dot(self, other: "StackedPoint") -> float:
        return float(np.vdot(self.blocks, other.blocks))

    def norm(self) -> float:
        return float(np.linalg.norm(self.blocks))

    def mean_block(self) -> np.ndarray:
        return self.blocks.mean(axis=0)

    def allclose(self, other: "StackedPoint", rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.blocks, other.blocks, rtol=rtol, atol=atol))
