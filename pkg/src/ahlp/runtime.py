"""Simulated message-passing runtime.

Logical ranks run as threads multiplexed over a bounded pool of worker
slots: a rank holds a slot while computing and gives it back while blocked in
a receive.  Messages are deep-copied into a central mailbox keyed by
``(communicator, source, destination, tag)`` and delivered FIFO per key.
When every unfinished rank is blocked on an empty channel the run is
declared deadlocked.

Collectives move data along a fixed binary tree over member positions
(position 0 is the root).  In deterministic mode the reduction gathers every
contribution along the tree and the root folds them left to right in member
order (or key order for keyed reductions), so the result is bitwise
independent of scheduling, worker count and how contributions are spread
over ranks.  Fast mode adds partial sums inside the tree instead.
"""

from __future__ import annotations

import copy
import os
import random
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Sequence

import numpy as np

ENV_WORKERS = "AHLP_WORKERS"


class RuntimeFailure(RuntimeError):
    pass


class RankError(RuntimeFailure):
    """A rank program raised; ``rank`` is the originating rank."""

    def __init__(self, rank: int, error: BaseException):
        super().__init__(f"rank {rank} failed: {type(error).__name__}: {error}")
        self.rank = rank
        self.error = error


class DeadlockError(RuntimeFailure):
    def __init__(self, blocked: dict[int, tuple]):
        self.blocked = dict(sorted(blocked.items()))
        desc = ", ".join(f"rank {r} waiting on {k[1]}->{k[2]} tag {k[3]!r}" for r, k in self.blocked.items())
        super().__init__(f"deadlock: all live ranks blocked ({desc})")

    @property
    def ranks(self) -> list[int]:
        return list(self.blocked)


class _Abort(BaseException):
    """Unwinds a rank after another rank failed or a deadlock was declared."""


class ShapeMismatch(ValueError):
    pass


def default_workers() -> int:
    env = os.environ.get(ENV_WORKERS)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


@dataclass
class Stats:
    messages: int = 0
    bytes: int = 0


def _nbytes(value) -> int:
    if isinstance(value, np.ndarray):
        return value.nbytes
    if hasattr(value, "data") and isinstance(getattr(value, "data"), np.ndarray):
        return value.data.nbytes
    if isinstance(value, dict):
        return sum(_nbytes(v) for v in value.values())
    if isinstance(value, (list, tuple)):
        return sum(_nbytes(v) for v in value)
    return 8


class _World:
    def __init__(self, size: int, workers: int, fuzz_seed: int | None):
        self.size = size
        self.cond = threading.Condition()
        # one condition per rank on the shared lock so a send wakes only its receiver
        self.wake = [threading.Condition(self.cond._lock) for _ in range(size)]
        self.mailbox: dict[tuple, deque] = defaultdict(deque)
        self.slots = threading.Semaphore(workers)
        self.blocked: dict[int, tuple] = {}
        self.done = [False] * size
        self.failure: RuntimeFailure | None = None
        self.fuzz_seed = fuzz_seed
        self.stats = Stats()

    def check_deadlock(self):
        live = [r for r in range(self.size) if not self.done[r]]
        if not live or self.failure is not None:
            return
        if all(r in self.blocked and not self.mailbox.get(self.blocked[r]) for r in live):
            self.failure = DeadlockError({r: self.blocked[r] for r in live})
            self.notify_everyone()

    def notify_everyone(self):
        for c in self.wake:
            c.notify_all()


class Communicator:
    """An ordered group of global ranks as seen from one member."""

    def __init__(self, ctx: "RankContext", members: Sequence[int], name: Hashable = None):
        members = tuple(int(m) for m in members)
        if len(set(members)) != len(members):
            raise ValueError(f"communicator members must be distinct: {members}")
        if ctx.rank not in members:
            raise ValueError(f"rank {ctx.rank} is not a member of {members}")
        self.ctx = ctx
        self.members = members
        self.id = (name, members)
        self.rank = members.index(ctx.rank)
        self._seq = 0

    @property
    def size(self) -> int:
        return len(self.members)

    def _tag(self, kind: str) -> tuple:
        self._seq += 1
        return (kind, self._seq)

    def send(self, dest: int, value, tag: Hashable = 0):
        self.ctx._send(self.id, self.members[dest], value, tag)

    def recv(self, source: int, tag: Hashable = 0):
        return self.ctx._recv(self.id, self.members[source], tag)

    # tree over positions relative to the root position
    def _tree(self, root: int):
        p = (self.rank - root) % self.size
        parent = None if p == 0 else ((p - 1) // 2 + root) % self.size
        kids = [(c + root) % self.size for c in (2 * p + 1, 2 * p + 2) if c < self.size]
        return parent, kids

    def gather(self, value, root: int = 0):
        """Values of all members at ``root`` in member order; ``None`` elsewhere."""
        tag = self._tag("gather")
        parent, kids = self._tree(root)
        items = {self.rank: value}
        for k in kids:
            items.update(self.recv(k, tag))
        if parent is not None:
            self.send(parent, items, tag)
            return None
        return [items[i] for i in range(self.size)]

    def bcast(self, value=None, root: int = 0):
        tag = self._tag("bcast")
        parent, kids = self._tree(root)
        if parent is not None:
            value = self.recv(parent, tag)
        for k in kids:
            self.send(k, value, tag)
        return copy.deepcopy(value) if parent is None else value

    scatter = bcast

    def reduce(self, value, root: int = 0, op: Callable = None):
        """Sum (or ``op``) of every member's value at ``root``; ``None`` elsewhere."""
        op = op or _add
        if not self.ctx.deterministic:
            tag = self._tag("reduce")
            parent, kids = self._tree(root)
            acc = value
            for k in kids:
                acc = _checked(op, acc, self.recv(k, tag))
            if parent is not None:
                self.send(parent, acc, tag)
                return None
            return acc
        vals = self.gather(value, root)
        if vals is None:
            return None
        acc = vals[0]
        for v in vals[1:]:
            acc = _checked(op, acc, v)
        return acc

    def allreduce(self, value, op: Callable = None):
        return self.bcast(self.reduce(value, 0, op), 0)

    def reduce_keyed(self, items: dict, order: Sequence[Hashable], root: int = 0, op: Callable = None):
        """Combine ``{key: value}`` maps from all members; the root folds them in ``order``.

        Keys missing from every member are skipped.  The result is bitwise
        independent of which member contributed which key.
        """
        op = op or _add
        parts = self.gather(items, root)
        if parts is None:
            return None
        merged = {}
        for p in parts:
            for k, v in p.items():
                if k in merged:
                    raise ValueError(f"key {k!r} contributed twice")
                merged[k] = v
        acc = None
        for k in order:
            if k in merged and merged[k] is not None:
                acc = merged[k] if acc is None else _checked(op, acc, merged[k])
        return acc

    def barrier(self):
        self.allreduce(0)


def _add(a, b):
    return a + b


def _checked(op, a, b):
    sa, sb = getattr(a, "shape", None), getattr(b, "shape", None)
    if sa != sb:
        raise ShapeMismatch(f"reduction operands have shapes {sa} and {sb}")
    return op(a, b)


class RankContext:
    """Handle given to a rank program: its id, the world and communicator factory."""

    def __init__(self, world: _World, rank: int, deterministic: bool, state: dict | None):
        self._world = world
        self.rank = rank
        self.size = world.size
        self.deterministic = deterministic
        self.state = state
        self._rng = random.Random(None if world.fuzz_seed is None else (world.fuzz_seed * 7919 + rank))
        self._holding = True
        self.world = Communicator(self, range(world.size), "world")

    def comm(self, members: Sequence[int], name: Hashable = None) -> Communicator:
        return Communicator(self, members, name)

    def _fuzz(self):
        if self._world.fuzz_seed is not None:
            if self._rng.random() < 0.5:
                time.sleep(self._rng.random() * 2e-4)
            else:
                time.sleep(0)

    def _send(self, comm_id, dest: int, value, tag):
        self._fuzz()
        w = self._world
        payload = copy.deepcopy(value)
        with w.cond:
            if w.failure is not None:
                raise _Abort()
            w.mailbox[(comm_id, self.rank, dest, tag)].append(payload)
            w.stats.messages += 1
            w.stats.bytes += _nbytes(payload)
            w.wake[dest].notify()

    def _recv(self, comm_id, source: int, tag):
        self._fuzz()
        w = self._world
        key = (comm_id, source, self.rank, tag)
        released = False
        try:
            with w.cond:
                while True:
                    if w.failure is not None:
                        raise _Abort()
                    q = w.mailbox.get(key)
                    if q:
                        value = q.popleft()
                        if not q:
                            del w.mailbox[key]
                        w.blocked.pop(self.rank, None)
                        break
                    if not released:
                        w.slots.release()
                        released = True
                    w.blocked[self.rank] = key
                    w.check_deadlock()
                    if w.failure is not None:
                        raise _Abort()
                    w.wake[self.rank].wait(0.25)
        finally:
            if released:
                w.slots.acquire()
        return value


class Runtime:
    """Runs SPMD rank programs over a bounded worker pool."""

    def __init__(self, workers: int | None = None, deterministic: bool = True, fuzz_seed: int | None = None):
        self.workers = default_workers() if workers is None else max(1, int(workers))
        self.deterministic = deterministic
        self.fuzz_seed = fuzz_seed
        self.last_stats = Stats()

    def spawn(self, num_ranks: int, program: Callable, *args, states: Sequence[dict] | None = None) -> list:
        """Run ``program(ctx, *args)`` once per rank and return the results in rank order.

        ``states`` optionally gives each rank a private dict that survives
        between spawns (``ctx.state``).
        """
        if num_ranks < 1:
            raise ValueError("num_ranks must be >= 1")
        world = _World(num_ranks, self.workers, self.fuzz_seed)
        results: list[Any] = [None] * num_ranks

        def body(rank: int):
            world.slots.acquire()
            ctx = RankContext(world, rank, self.deterministic, states[rank] if states else None)
            try:
                results[rank] = program(ctx, *args)
            except _Abort:
                pass
            except BaseException as exc:  # noqa: BLE001 - propagate any rank failure
                with world.cond:
                    if world.failure is None:
                        world.failure = RankError(rank, exc)
                        world.failure.__cause__ = exc
                    world.notify_everyone()
            finally:
                with world.cond:
                    world.done[rank] = True
                    world.blocked.pop(rank, None)
                    world.check_deadlock()
                world.slots.release()

        if num_ranks == 1 and self.fuzz_seed is None:
            body(0)
        else:
            threads = [threading.Thread(target=body, args=(r,), daemon=True, name=f"rank-{r}") for r in range(num_ranks)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        self.last_stats = world.stats
        if world.failure is not None:
            raise world.failure
        undelivered = sum(len(q) for q in world.mailbox.values())
        if undelivered:
            raise RuntimeFailure(f"{undelivered} message(s) sent but never received")
        return results


def spawn(num_ranks: int, program: Callable, *args, workers: int | None = None,
          deterministic: bool = True, fuzz_seed: int | None = None) -> list:
    return Runtime(workers, deterministic, fuzz_seed).spawn(num_ranks, program, *args)


# ---------------------------------------------------------------------------
# rank assignment


@dataclass
class Assignment:
    """Which ranks serve which tree node, and which rank owns which block.

    ``members[node_id]`` is the node's communicator (its first member owns
    the node's Schur complement).  ``layer_of[node_id]`` is the node depth.
    """

    num_ranks: int
    members: dict[int, tuple[int, ...]]
    layer_of: dict[int, int]
    block_owner: dict[int, int]
    notes: list[str] = field(default_factory=list)

    def owner(self, node_id: int) -> int:
        return self.members[node_id][0]

    def blocks_of(self, rank: int) -> list[int]:
        return sorted(b for b, r in self.block_owner.items() if r == rank)

    def roles(self, rank: int) -> list[tuple[int, str, int]]:
        """``(layer, role, node_id)`` for every node the rank serves."""
        out = []
        for nid, mem in self.members.items():
            if rank in mem:
                role = "owner" if mem[0] == rank else "member"
                out.append((self.layer_of[nid], role, nid))
        return sorted(out)


def _split_counts(total: int, weights: Sequence[int]) -> list[int]:
    """Split ``total`` ranks over children with block counts ``weights``.

    Each child gets at least one and at most ``weights[j]`` ranks, roughly
    proportional to its weight; leftovers go to the leftmost children.
    """
    k = len(weights)
    W = sum(weights)
    counts = [min(w, max(1, (total * w) // W)) for w in weights]
    while sum(counts) > total:
        j = max(range(k), key=lambda j: (counts[j], -j))
        counts[j] -= 1
    j = 0
    while sum(counts) < total:
        if counts[j] < weights[j]:
            counts[j] += 1
        j = (j + 1) % k
    return counts


def _contiguous(items: Sequence, weights: Sequence[int], parts: int) -> list[list]:
    """Split ``items`` into ``parts`` nonempty contiguous runs of near-equal total weight.

    With equal weights this is the usual even split with the remainder going
    to the first runs.
    """
    n = len(items)
    if parts > n:
        raise ValueError(f"cannot split {n} items into {parts} nonempty runs")
    if len(set(weights)) <= 1:
        base, rem = divmod(n, parts)
        out, s = [], 0
        for p in range(parts):
            size = base + (1 if p < rem else 0)
            out.append(list(items[s : s + size]))
            s += size
        return out
    out = [[] for _ in range(parts)]
    total = sum(weights)
    acc = 0.0
    prev = -1
    for idx, (item, w) in enumerate(zip(items, weights)):
        p = int((acc + w / 2) * parts / total)
        p = max(p, prev, parts - (n - idx), 0)
        p = min(p, prev + 1, parts - 1)
        out[p].append(item)
        prev = p
        acc += w
    return out


def assign(tree, num_ranks: int) -> Assignment:
    """Top-down rank assignment over a tree of nodes.

    ``tree.root`` is a node with ``id``, ``blocks`` (covered block ids) and
    ``children`` (nodes, or ``int`` block ids at the bottom).  Ranks are
    split over children in proportion to their block counts when there are
    at least as many ranks as children; otherwise every rank takes whole
    contiguous children, so a rank serving several systems of one layer
    always owns each of them alone.
    """
    N = len(tree.root.blocks)
    if num_ranks < 1:
        raise ValueError("num_ranks must be >= 1")
    if num_ranks > N:
        raise ValueError(f"num_ranks={num_ranks} exceeds the number of blocks N={N}")
    members: dict[int, tuple[int, ...]] = {}
    layer_of: dict[int, int] = {}
    owner: dict[int, int] = {}

    def visit(node, ranks: list[int], depth: int):
        members[node.id] = tuple(ranks)
        layer_of[node.id] = depth
        kids = list(node.children)
        if not kids:
            return
        if all(isinstance(c, (int, np.integer)) for c in kids):
            for r, run in zip(ranks, _contiguous(kids, [1] * len(kids), len(ranks))):
                for b in run:
                    owner[int(b)] = r
            return
        weights = [1 if isinstance(c, (int, np.integer)) else len(c.blocks) for c in kids]
        if len(ranks) >= len(kids):
            counts = _split_counts(len(ranks), weights)
            s = 0
            for c, cnt in zip(kids, counts):
                sub = ranks[s : s + cnt]
                s += cnt
                if isinstance(c, (int, np.integer)):
                    owner[int(c)] = sub[0]
                else:
                    visit(c, sub, depth + 1)
        else:
            for r, run in zip(ranks, _contiguous(kids, weights, len(ranks))):
                for c in run:
                    if isinstance(c, (int, np.integer)):
                        owner[int(c)] = r
                    else:
                        visit(c, [r], depth + 1)

    visit(tree.root, list(range(num_ranks)), 0)
    return Assignment(num_ranks, members, layer_of, owner)


def check_assignment(tree, a: Assignment) -> list[str]:
    """Independent checker; returns the list of violated conditions."""
    problems = []
    N = len(tree.root.blocks)
    owned = sorted(a.block_owner)
    if owned != sorted(int(b) for b in tree.root.blocks):
        problems.append(f"blocks owned {owned} differ from tree blocks")
    used = sorted(set(a.block_owner.values()))
    if used != list(range(a.num_ranks)):
        problems.append(f"ranks owning blocks {used} are not dense in 0..{a.num_ranks - 1}")
    by_layer: dict[int, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for nid, mem in a.members.items():
        for r in mem:
            by_layer[a.layer_of[nid]][r].append(nid)
    for layer, ranks in by_layer.items():
        for r, nodes in ranks.items():
            sets = {frozenset(a.members[n]) for n in nodes}
            if len(nodes) > 1 and len(sets) > 1:
                problems.append(f"rank {r} serves nodes {nodes} of layer {layer} with different rank sets")
    stack = [tree.root]
    while stack:
        node = stack.pop()
        mem = set(a.members.get(node.id, ()))
        for c in node.children:
            if isinstance(c, (int, np.integer)):
                if a.block_owner.get(int(c)) not in mem:
                    problems.append(f"block {int(c)} owned outside node {node.id}")
            else:
                if not set(a.members.get(c.id, ())) <= mem:
                    problems.append(f"node {c.id} members not within parent {node.id}")
                stack.append(c)
    if a.num_ranks == N and any(a.block_owner[b] != b - 1 for b in a.block_owner):
        problems.append("num_ranks == N but assignment is not the identity map")
    return problems
