import hashlib
import time

import numpy as np
import pytest
import scipy.sparse as sp

from ahlp.runtime import (
    DeadlockError,
    RankError,
    Runtime,
    RuntimeFailure,
    ShapeMismatch,
    assign,
    check_assignment,
    spawn,
)
from ahlp.schur import build_hierarchy, layout_for

from conftest import standard


def test_single_rank():
    assert spawn(1, lambda ctx: 42) == [42]


def test_results_in_rank_order():
    assert spawn(5, lambda ctx: ctx.rank * 10, workers=2) == [0, 10, 20, 30, 40]


def test_gather_orders_by_source():
    def prog(ctx):
        return ctx.world.gather(f"r{ctx.rank}", root=0)

    for fuzz in (None, 1, 2, 3):
        out = Runtime(workers=4, fuzz_seed=fuzz).spawn(4, prog)
        assert out[0] == ["r0", "r1", "r2", "r3"]
        assert out[1:] == [None, None, None]


def test_point_to_point_fifo_per_channel():
    def prog(ctx):
        if ctx.rank == 0:
            for k in range(20):
                ctx.world.send(1, k, tag="a")
            return None
        return [ctx.world.recv(0, tag="a") for _ in range(20)]

    assert Runtime(fuzz_seed=5).spawn(2, prog)[1] == list(range(20))


def test_deadlock_detected_quickly():
    def prog(ctx):
        if ctx.rank == 0:
            ctx.world.recv(1, tag="never")

    t0 = time.perf_counter()
    with pytest.raises(DeadlockError) as e:
        Runtime(workers=2).spawn(2, prog)
    assert time.perf_counter() - t0 < 1.0
    assert e.value.ranks == [0]
    assert "rank 0" in str(e.value)


def test_cyclic_deadlock_names_both():
    def prog(ctx):
        ctx.world.recv(1 - ctx.rank)

    with pytest.raises(DeadlockError) as e:
        Runtime(workers=2).spawn(2, prog)
    assert e.value.ranks == [0, 1]


def test_rank_exception_propagates():
    def prog(ctx):
        if ctx.rank == 2:
            raise KeyError("bad")
        ctx.world.barrier()

    with pytest.raises(RankError) as e:
        Runtime(workers=4).spawn(4, prog)
    assert e.value.rank == 2 and isinstance(e.value.error, KeyError)


def test_unreceived_message_is_an_error():
    def prog(ctx):
        if ctx.rank == 0:
            ctx.world.send(1, "orphan")

    with pytest.raises(RuntimeFailure):
        spawn(2, prog)


# -- reductions ------------------------------------------------------------------


def test_reduce_scalar():
    out = spawn(4, lambda ctx: ctx.world.reduce(1, root=0))
    assert out == [4, None, None, None]


def test_reduce_identity_bitwise():
    v = np.random.default_rng(0).normal(size=7) * 1e10

    def prog(ctx):
        return ctx.world.allreduce(v.copy() if ctx.rank == 2 else np.zeros(7))

    for out in spawn(5, prog):
        assert np.array_equal(out, v)


def test_sparse_reduce_matches_left_fold():
    rng = np.random.default_rng(1)
    mats = [sp.random(30, 30, density=0.1, random_state=rng, format="csr") * 1e3 for _ in range(8)]
    fold = mats[0]
    for m in mats[1:]:
        fold = fold + m

    def prog(ctx):
        return ctx.world.reduce(mats[ctx.rank], root=0)

    for fuzz in (None, 7, 8):
        got = Runtime(workers=8, fuzz_seed=fuzz).spawn(8, prog)[0]
        assert np.array_equal(got.toarray(), fold.toarray())


def test_reduce_shape_mismatch():
    def prog(ctx):
        return ctx.world.reduce(np.zeros(ctx.rank + 1))

    with pytest.raises(RankError) as e:
        spawn(2, prog)
    assert isinstance(e.value.error, ShapeMismatch)


def test_reduce_keyed_is_placement_independent():
    vals = {k: np.random.default_rng(k).normal(size=3) * 10 ** k for k in range(6)}

    def prog(ctx, split):
        mine = {k: vals[k] for k in split[ctx.rank]}
        return ctx.world.reduce_keyed(mine, order=range(6))

    a = spawn(2, prog, [[0, 1, 2], [3, 4, 5]])[0]
    b = spawn(3, prog, [[5, 0], [3], [1, 2, 4]])[0]
    assert np.array_equal(a, b)


# -- scatter -----------------------------------------------------------------------


def test_scatter_single_member():
    assert spawn(1, lambda ctx: ctx.comm([0]).scatter([1, 2], root=0)) == [[1, 2]]


def test_scatter_copies():
    dz = np.arange(5.0)

    def prog(ctx):
        got = ctx.world.scatter(dz if ctx.rank == 0 else None, root=0)
        return hashlib.sha256(got.tobytes()).hexdigest(), got

    out = spawn(4, prog)
    assert len({h for h, _ in out}) == 1
    assert all(np.array_equal(g, dz) for _, g in out)
    out[1][1][0] = 99.0
    assert out[2][1][0] == 0.0


def test_subcommunicators():
    def prog(ctx):
        sub = ctx.comm([1, 3] if ctx.rank in (1, 3) else [0, 2], name="pair")
        return sub.allreduce(ctx.rank)

    assert spawn(4, prog) == [2, 4, 2, 4]


# -- fuzz ------------------------------------------------------------------------------


def _traffic(ctx, rounds):
    """Every rank sends numbered messages to every other rank and checks arrival."""
    n = ctx.size
    for r in range(rounds):
        for d in range(n):
            if d != ctx.rank:
                ctx.world.send(d, (ctx.rank, r), tag=("t", r % 3))
    seen = []
    for r in range(rounds):
        for s in range(n):
            if s != ctx.rank:
                got = ctx.world.recv(s, tag=("t", r % 3))
                seen.append(got == (s, r))
    total = ctx.world.allreduce(len(seen))
    return all(seen), total


@pytest.mark.parametrize("trial", range(20))
def test_fuzzed_traffic(trial):
    n = 2 + trial % 5
    rt = Runtime(workers=1 + trial % 3, fuzz_seed=trial)
    out = rt.spawn(n, _traffic, 4)
    assert all(ok for ok, _ in out)
    assert {t for _, t in out} == {n * (n - 1) * 4}


# -- assignment ---------------------------------------------------------------------------


def _tree(N, layers):
    return build_hierarchy(layout_for(standard(N, local_links=1)), layers)


def test_identity_when_ranks_equal_blocks():
    a = assign(_tree(8, 2), 8)
    assert a.block_owner == {b: b - 1 for b in range(1, 9)}


def test_two_ranks_own_whole_leaves():
    tree = build_hierarchy(layout_for(standard(8, local_links=1)), 2, partition=[4])
    a = assign(tree, 2)
    assert check_assignment(tree, a) == []
    for leaf in tree.leaves():
        assert len({a.block_owner[b] for b in leaf.blocks}) == 1


def test_three_ranks_share_at_most_one_leaf_per_layer():
    tree = build_hierarchy(layout_for(standard(8, local_links=1)), 2, partition=[4])
    a = assign(tree, 3)
    assert check_assignment(tree, a) == []
    for r in range(3):
        shared = [n for n in tree.leaves() if r in a.members[n.id] and len(a.members[n.id]) > 1]
        assert len(shared) <= 1


@pytest.mark.parametrize("N", [1, 2, 3, 5, 8, 9, 16])
@pytest.mark.parametrize("layers", [1, 2, 3])
def test_assignment_grid(N, layers):
    tree = _tree(N, layers)
    for R in range(1, N + 1):
        assert check_assignment(tree, assign(tree, R)) == []


def test_checker_catches_violations():
    tree = _tree(4, 1)
    a = assign(tree, 4)
    a.block_owner[2] = 0
    assert check_assignment(tree, a)
