"""Predicted sparsity of the Schur complements (Observation 1 and the band bound)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem.links import LinkClassification


def observation1_bound(l, m_global: int, n0: int) -> int:
    l = np.asarray(l, dtype=np.int64)
    d = int(m_global + n0)
    return int((l * l).sum() + 2 * (l[:-1] * l[1:]).sum() + 2 * l.sum() * d + d * d)


def band_bound(groups) -> int:
    g = np.asarray(groups, dtype=np.int64)
    return int((g * g).sum() + 2 * (g[:-1] * g[1:]).sum())


def band_mask(groups) -> np.ndarray:
    """Block-tridiagonal mask over consecutive groups of the given sizes."""
    g = np.asarray(groups, dtype=np.int64)
    off = np.concatenate([[0], np.cumsum(g)])
    n = int(off[-1])
    mask = np.zeros((n, n), dtype=bool)
    for j in range(g.size):
        lo, hi = off[j], off[j + 1]
        mask[lo:hi, lo:hi] = True
        if j + 1 < g.size:
            nhi = off[j + 2]
            mask[lo:hi, hi:nhi] = True
            mask[hi:nhi, lo:hi] = True
    return mask


@dataclass(frozen=True, eq=False)
class SchurPattern:
    """Block pattern of the flat Schur complement in corner order ``(y_L, x_0, y_0)``.

    The blocks of ``l`` are the diagonal blocks ``M_i``, neighbouring groups
    couple through ``H_i``, and the dense border ``E`` plus corner ``M_0``
    cover the global rows and ``x_0``.  The ``y_0`` rows only couple to
    ``x_0`` through ``A_0`` and lie outside the Observation-1 count.
    """

    l: np.ndarray
    m_global: int
    n0: int
    m0: int
    perm: np.ndarray

    @property
    def core_size(self) -> int:
        return int(self.l.sum()) + self.m_global + self.n0

    @property
    def size(self) -> int:
        return self.core_size + self.m0

    @property
    def bound(self) -> int:
        return observation1_bound(self.l, self.m_global, self.n0)

    @property
    def band_bound(self) -> int:
        return band_bound(self.l)

    def group_slices(self) -> list[slice]:
        off = np.concatenate([[0], np.cumsum(self.l)])
        return [slice(int(off[j]), int(off[j + 1])) for j in range(self.l.size)]

    def core_mask(self) -> np.ndarray:
        nl = int(self.l.sum())
        mask = np.zeros((self.core_size,) * 2, dtype=bool)
        mask[:nl, :nl] = band_mask(self.l)
        mask[nl:, :] = True
        mask[:, nl:] = True
        return mask

    def mask(self) -> np.ndarray:
        """Predicted support including the ``y_0``/``x_0`` coupling."""
        c = self.core_size
        mask = np.zeros((self.size,) * 2, dtype=bool)
        mask[:c, :c] = self.core_mask()
        x0 = slice(c - self.n0, c)
        y0 = slice(c, self.size)
        mask[y0, x0] = True
        mask[x0, y0] = True
        return mask

    @property
    def density(self) -> float:
        return float(self.mask().sum()) / max(self.size, 1) ** 2


def predict_sparsity(cls: LinkClassification, n0: int, m0: int = 0) -> SchurPattern:
    return SchurPattern(np.asarray(cls.counts, dtype=np.int64), cls.m_global, int(n0), int(m0), cls.perm)
