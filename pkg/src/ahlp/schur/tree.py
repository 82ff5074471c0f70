"""Schur decomposition trees.

A node owns a set of corner unknowns (positions in the corner order of
``KktLayout``) and has children that are either diagonal blocks (``int``)
or nodes.  Eliminating children before parents is exact because sibling
subtrees never couple directly: a 2-link between blocks ``i`` and ``i+1``
is owned by the lowest node whose partition separates the two blocks, and
everything touching ``x_0`` sits at the root.

* ``layers == 1``: one flat node, corner = every linking row, ``x_0``, ``y_0``.
* ``layers >= 2``: a dense root over the global rows, ``x_0`` and ``y_0``;
  below it ``layers - 1`` levels of recursive partitioning into
  ``k = round(sqrt(n))`` near-equal groups, ending in leaves solved with the
  flat scheme over their blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..problem.links import GLOBAL
from .kkt import KktLayout
from .pattern import band_bound, band_mask

MAX_LAYERS = 4


@dataclass(eq=False)
class Node:
    id: int
    kind: str  # 'flat' | 'root' | 'inner' | 'leaf'
    path: str
    blocks: tuple[int, ...]
    corner: np.ndarray
    children: list = field(default_factory=list)
    groups: np.ndarray | None = None  # link-group sizes for band nodes
    cut_after: tuple[int, ...] = ()  # last block of every child group but the final one
    depth: int = 0

    @property
    def child_nodes(self) -> list["Node"]:
        return [c for c in self.children if isinstance(c, Node)]

    @property
    def child_blocks(self) -> list[int]:
        return [int(c) for c in self.children if not isinstance(c, Node)]

    def walk(self):
        yield self
        for c in self.child_nodes:
            yield from c.walk()

    @property
    def band_bound(self) -> int | None:
        return None if self.groups is None else band_bound(self.groups)

    def band_mask(self) -> np.ndarray | None:
        return None if self.groups is None else band_mask(self.groups)


@dataclass(eq=False)
class SchurTree:
    root: Node
    layers: int
    N: int

    def nodes(self) -> list[Node]:
        return list(self.root.walk())

    def node(self, node_id: int) -> Node:
        for n in self.root.walk():
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes() if not n.child_nodes]

    def by_depth(self) -> dict[int, list[Node]]:
        out: dict[int, list[Node]] = {}
        for n in self.nodes():
            out.setdefault(n.depth, []).append(n)
        return out

    def describe(self) -> str:
        parts = []
        for depth, nodes in sorted(self.by_depth().items()):
            sizes = ",".join(f"{n.kind}[{len(n.blocks)}b/{n.corner.size}c]" for n in nodes)
            parts.append(f"L{depth}: {sizes}")
        return "; ".join(parts)


def split_even(lo: int, hi: int, k: int) -> list[tuple[int, int]]:
    """``k`` contiguous ranges tiling blocks ``lo..hi``; the remainder goes to the leftmost groups."""
    n = hi - lo + 1
    base, rem = divmod(n, k)
    out, s = [], lo
    for j in range(k):
        size = base + (1 if j < rem else 0)
        out.append((s, s + size - 1))
        s += size
    return out


def fanout(n: int) -> int:
    return int(math.floor(math.sqrt(n) + 0.5))


def _weighted(lo: int, hi: int, k: int, l: np.ndarray) -> list[tuple[int, int]]:
    """Even split, then move every cut within a quarter group to the pair with the fewest 2-links."""
    rng = split_even(lo, hi, k)
    cuts = [b for _, b in rng[:-1]]
    width = max(1, (hi - lo + 1) // (4 * k))
    new = []
    prev = lo - 1
    for j, c in enumerate(cuts):
        nxt_limit = cuts[j + 1] - 1 if j + 1 < len(cuts) else hi - 1
        cands = [p for p in range(c - width, c + width + 1) if prev < p <= nxt_limit]
        best = min(cands, key=lambda p: (l[p - 1], abs(p - c), p))
        new.append(best)
        prev = best
    bounds = [lo - 1] + new + [hi]
    return [(bounds[j] + 1, bounds[j + 1]) for j in range(len(bounds) - 1)]


def _explicit(lo: int, hi: int, cuts) -> list[tuple[int, int]]:
    cuts = sorted(set(int(c) for c in cuts))
    if any(c < lo or c >= hi for c in cuts):
        raise ValueError(f"partition cut points must lie in {lo}..{hi - 1}, got {cuts}")
    bounds = [lo - 1] + cuts + [hi]
    return [(bounds[j] + 1, bounds[j + 1]) for j in range(len(bounds) - 1)]


def build_hierarchy(layout: KktLayout, layers: int = 1, partition="auto") -> SchurTree:
    """Build the decomposition tree.

    ``partition`` is ``'auto'`` (even split), ``'weighted'`` (cuts nudged to
    pairs with few 2-links) or a sequence of cut points ``i_1 < ... < i_k``
    (a cut after block ``i``) used for the top partition level.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    layers = min(int(layers), MAX_LAYERS)
    cls = layout.cls
    N = layout.N
    labels = cls.labels
    pos = layout.link_pos
    l = np.asarray(cls.counts, dtype=np.int64)
    counter = iter(range(10**9))

    def link_positions(pairs) -> np.ndarray:
        pairs = set(pairs)
        rows = [r for r in range(labels.size) if labels[r] != GLOBAL and int(labels[r]) in pairs]
        return np.sort(pos[np.array(rows, dtype=np.int64)]) if rows else np.zeros(0, np.int64)

    if layers == 1:
        root = Node(
            next(counter), "flat", "flat", tuple(range(1, N + 1)),
            np.arange(layout.corner_size, dtype=np.int64), list(range(1, N + 1)),
            groups=l.copy(), depth=0,
        )
        return SchurTree(root, 1, N)

    glob = np.sort(pos[cls.global_rows()]) if cls.m_global else np.zeros(0, np.int64)
    root_corner = np.concatenate([glob, layout.x0_pos, layout.y0_pos]).astype(np.int64)

    def build(lo: int, hi: int, levels: int, path: str, depth: int, top: bool) -> Node:
        n = hi - lo + 1
        if levels <= 0 or n <= 2:
            pairs = list(range(lo, hi))
            return Node(
                next(counter), "leaf", path, tuple(range(lo, hi + 1)), link_positions(pairs),
                list(range(lo, hi + 1)), groups=l[lo - 1 : hi - 1].copy(), depth=depth,
            )
        if top and partition not in ("auto", "weighted", None):
            ranges = _explicit(lo, hi, partition)
        elif partition == "weighted":
            ranges = _weighted(lo, hi, fanout(n), l)
        else:
            ranges = split_even(lo, hi, fanout(n))
        cuts = tuple(b for _, b in ranges[:-1])
        node = Node(
            next(counter), "inner", path, tuple(range(lo, hi + 1)), link_positions(cuts),
            [], groups=l[np.array(cuts, dtype=np.int64) - 1].copy() if cuts else np.zeros(0, np.int64),
            cut_after=cuts, depth=depth,
        )
        for j, (a, b) in enumerate(ranges):
            node.children.append(build(a, b, levels - 1, f"{path}/{j}", depth + 1, False))
        return node

    sub = build(1, N, layers - 1, "root/inner", 1, True)
    root = Node(next(counter), "root", "root", tuple(range(1, N + 1)), root_corner, [sub], depth=0)
    depth = max(n.depth for n in root.walk())
    return SchurTree(root, depth + 1, N)
