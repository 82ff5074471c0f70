"""Local (2-link) versus global classification of linking rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GLOBAL = -1


def row_supports(problem, name: str = "F") -> list[frozenset[int]]:
    """For each linking row of ``name`` ('F' or 'G'), the diagonal blocks it touches."""
    m = getattr(problem.blocks[0], name).rows
    support: list[set[int]] = [set() for _ in range(m)]
    for i in range(1, problem.N + 1):
        mat = getattr(problem.blocks[i], name)
        for r in np.unique(mat.row):
            support[int(r)].add(i)
    return [frozenset(s) for s in support]


def label_for_support(support: frozenset[int], N: int) -> int:
    """Pair index ``i`` of a 2-link between blocks ``i`` and ``i+1``, or ``GLOBAL``.

    A row touching only block ``i`` is Local(i) (Local(N-1) when ``i == N``).
    Rows touching only ``x_0`` are global.
    """
    if not support or N < 2:
        return GLOBAL
    lo, hi = min(support), max(support)
    if hi - lo > 1:
        return GLOBAL
    return min(lo, N - 1)


@dataclass(frozen=True)
class LinkClassification:
    """Labels of the linking equality rows of a standard-form problem.

    ``labels[r]`` is the pair index ``i`` (1-based) for Local(i) rows and
    ``GLOBAL`` otherwise.  ``perm`` lists row indices with local rows grouped
    by ascending ``i`` followed by the global rows; ``counts[i-1] = l_i``.
    """

    N: int
    labels: np.ndarray
    supports: tuple[frozenset[int], ...]

    @property
    def num_rows(self) -> int:
        return int(self.labels.size)

    @property
    def counts(self) -> np.ndarray:
        """``l_1 .. l_{N-1}``."""
        out = np.zeros(max(self.N - 1, 0), dtype=np.int64)
        loc = self.labels[self.labels != GLOBAL]
        np.add.at(out, loc - 1, 1)
        return out

    @property
    def m_global(self) -> int:
        return int(np.count_nonzero(self.labels == GLOBAL))

    def local_rows(self, i: int | None = None) -> np.ndarray:
        if i is None:
            return self.perm[: self.num_rows - self.m_global]
        return np.nonzero(self.labels == i)[0]

    def global_rows(self) -> np.ndarray:
        return np.nonzero(self.labels == GLOBAL)[0]

    @property
    def perm(self) -> np.ndarray:
        key = np.where(self.labels == GLOBAL, self.N + 1, self.labels)
        return np.argsort(key, kind="stable")

    def describe(self) -> str:
        l = ",".join(str(int(v)) for v in self.counts)
        return f"l=({l}) m_F={self.m_global}"


def classify_links(problem) -> LinkClassification:
    """Label every linking equality row of a standard-form problem."""
    problem = getattr(problem, "problem", problem)
    if not problem.is_standard:
        raise ValueError("classify_links expects a problem in standard form (no inequality rows)")
    supports = row_supports(problem, "F")
    labels = np.array([label_for_support(s, problem.N) for s in supports], dtype=np.int64)
    return LinkClassification(problem.N, labels, tuple(supports))
