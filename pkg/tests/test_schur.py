import numpy as np
import pytest

from ahlp.oracle import assemble_dense, dense_kkt_solve
from ahlp.problem import classify_links
from ahlp.runtime import Runtime
from ahlp.schur import (
    assemble_block_kkt,
    band_bound,
    build_hierarchy,
    factor_flat,
    factor_hierarchical,
    layout_for,
    observation1_bound,
    predict_sparsity,
    solve_flat,
    solve_hierarchical,
)

from conftest import instance, link_problem, random_sigma, rel, standard


def _kkt(std, seed=0):
    lay = layout_for(std)
    sigma = random_sigma(lay, np.random.default_rng(seed))
    return assemble_block_kkt(std, sigma, lay), sigma


# -- bounds -------------------------------------------------------------------


def test_observation1_examples():
    assert observation1_bound([1, 1], 0, 0) == 4
    assert observation1_bound([0, 0, 0], 2, 3) == 25
    assert observation1_bound([2, 2, 2], 1, 1) == 56


def test_bound_matches_brute_force_fill():
    # N=3, one link per neighbouring pair, nothing global: S is a full 2x2
    std = link_problem(3, [{1, 2}, {2, 3}])
    kkt, _ = _kkt(std)
    fact = factor_flat(kkt)
    S = fact.schur_matrices()["flat"]
    assert np.count_nonzero(S) == observation1_bound([1, 1], 0, 0) == 4


def test_band_bound():
    assert band_bound([1, 1]) == 4
    assert band_bound([2, 3]) == 4 + 9 + 12
    assert band_bound([]) == 0


# -- block assembly -------------------------------------------------------------


def test_single_block_has_only_corner_and_k1():
    std = standard(1, n0=1, local_links=0, global_links=0, ineq_rows=0, m0=1)
    kkt, sigma = _kkt(std)
    lay = kkt.layout
    assert lay.N == 1 and lay.m_link == 0
    assert kkt.K0.shape == (lay.n0 + lay.m0,) * 2


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5, 6])
def test_reassembly_equals_oracle_entrywise(N):
    std = standard(N, ineq_rows=1, link_ineq=0.5, m0=1 if N > 1 else 0)
    kkt, sigma = _kkt(std, N)
    assert np.array_equal(kkt.to_dense(), assemble_dense(std, sigma).matrix)


def test_empty_corner():
    std = standard(4, n0=0, global_links=0, m0=0, ineq_rows=0)
    kkt, _ = _kkt(std)
    assert kkt.layout.n0 == 0 and kkt.layout.cls.m_global == 0
    assert kkt.K0.shape == (3, 3)  # only the local links
    for i in range(1, 5):
        assert kkt.L[i].shape[1] == 3


# -- hierarchy ----------------------------------------------------------------------


def test_nine_blocks_two_layers():
    std = standard(9, local_links=1, global_links=0, n0=0)
    tree = build_hierarchy(layout_for(std), 2)
    leaves = tree.leaves()
    assert [n.blocks for n in leaves] == [(1, 2, 3), (4, 5, 6), (7, 8, 9)]
    inner = tree.root.child_nodes[0]
    assert inner.cut_after == (3, 6)
    assert inner.corner.size == 2
    assert inner.groups.tolist() == [1, 1]


def test_one_layer_is_flat():
    std = standard(5)
    tree = build_hierarchy(layout_for(std), 1)
    assert tree.root.kind == "flat" and tree.root.child_blocks == [1, 2, 3, 4, 5]


def test_sixteen_blocks_three_layers_tile():
    std = standard(16, local_links=1)
    tree = build_hierarchy(layout_for(std), 3)
    seen = [b for leaf in tree.leaves() for b in leaf.blocks]
    assert sorted(seen) == list(range(1, 17)) and len(seen) == 16
    for node in tree.nodes():
        kids = node.child_nodes
        if kids:
            assert sum((k.blocks for k in kids), ()) == node.blocks


def test_explicit_partition():
    std = standard(6)
    tree = build_hierarchy(layout_for(std), 2, partition=[2, 4])
    assert [n.blocks for n in tree.leaves()] == [(1, 2), (3, 4), (5, 6)]
    with pytest.raises(ValueError):
        build_hierarchy(layout_for(std), 2, partition=[6])


# -- solves -------------------------------------------------------------------------


def _check_chain(std, seed, layer_counts=(2, 3)):
    kkt, sigma = _kkt(std, seed)
    K = kkt.to_dense()
    rng = np.random.default_rng(seed + 1)
    b = rng.normal(size=K.shape[0])
    ref = dense_kkt_solve(assemble_dense(std, sigma, b))
    flat = solve_flat(factor_flat(kkt), b)
    assert np.linalg.norm(K @ flat - b) / np.linalg.norm(b) <= 1e-8
    assert rel(flat, ref) <= 1e-8
    for layers in layer_counts:
        tree = build_hierarchy(kkt.layout, layers)
        hier = solve_hierarchical(factor_hierarchical(kkt, tree), b)
        assert np.linalg.norm(K @ hier - b) / np.linalg.norm(b) <= 1e-8
        assert rel(hier, flat) <= 1e-9
    return flat


@pytest.mark.parametrize("N, seed", [(1, 0), (2, 1), (4, 2), (7, 3), (9, 4), (16, 5)])
def test_equivalence_chain(N, seed):
    _check_chain(standard(N, seed=seed, ineq_rows=1, local_links=2, n0=min(3, N)), seed)


def test_equivalence_chain_n27():
    _check_chain(standard(27, seed=9, local_links=1, global_links=2), 9)


def test_empty_dense_layer_solves():
    std = standard(6, n0=0, global_links=0, m0=0)
    kkt, _ = _kkt(std)
    tree = build_hierarchy(kkt.layout, 2)
    assert tree.root.corner.size == 0
    _check_chain(std, 3)


def test_zero_rhs_and_constructed_rhs():
    std = standard(4, seed=3)
    kkt, _ = _kkt(std)
    fact = factor_flat(kkt)
    assert np.all(solve_flat(fact, np.zeros(kkt.layout.order)) == 0)
    v = np.random.default_rng(0).normal(size=kkt.layout.order)
    assert rel(solve_flat(fact, kkt.to_dense() @ v), v) <= 1e-8


def test_flat_schur_matches_dense_brute_force():
    std = standard(4, seed=2)
    kkt, _ = _kkt(std)
    S = factor_flat(kkt).schur_matrices()["flat"]
    ref = kkt.K0.copy()
    for i in range(1, 5):
        Ki, Li = kkt.K[i].toarray(), kkt.L[i].toarray()
        ref -= Li.T @ np.linalg.solve(Ki, Li)
    assert np.abs(S - ref).max() <= 1e-10 * np.abs(ref).max()


def test_multiple_columns():
    std = standard(5, seed=4)
    kkt, _ = _kkt(std)
    fact = factor_flat(kkt)
    B = np.random.default_rng(1).normal(size=(kkt.layout.order, 3))
    X = solve_flat(fact, B)
    for j in range(3):
        assert np.array_equal(X[:, j], solve_flat(fact, B[:, j]))


# -- sparsity soundness -------------------------------------------------------------


@pytest.mark.parametrize("N, seed", [(3, 0), (5, 1), (8, 2), (12, 3)])
def test_flat_schur_within_predicted_pattern(N, seed):
    std = standard(N, seed=seed, local_links=[(i % 3) for i in range(N - 1)], global_links=2, n0=2, m0=1)
    kkt, _ = _kkt(std, seed)
    lay = kkt.layout
    pat = predict_sparsity(lay.cls, lay.n0, lay.m0)
    S = factor_flat(kkt).schur_matrices()["flat"]
    assert S.shape == (pat.size,) * 2
    nz = np.abs(S) > 1e-12
    assert not np.any(nz & ~pat.mask())
    c = pat.core_size
    assert np.count_nonzero(nz[:c, :c]) <= pat.bound


def test_inner_layers_are_block_tridiagonal():
    std = standard(27, seed=1, local_links=1, global_links=1, n0=1)
    kkt, _ = _kkt(std, 1)
    tree = build_hierarchy(kkt.layout, 3)
    fact = factor_hierarchical(kkt, tree)
    mats = fact.schur_matrices()
    checked = 0
    for node in tree.nodes():
        if node.kind not in ("inner", "leaf") or node.path not in mats or node.corner.size == 0:
            continue
        S = mats[node.path]
        nz = np.abs(S) > 1e-12
        assert not np.any(nz & ~node.band_mask())
        assert np.count_nonzero(nz) <= node.band_bound
        checked += 1
    assert checked >= 2


# -- determinism ---------------------------------------------------------------------


def test_schur_bitwise_across_rank_counts():
    std = standard(8, seed=5, local_links=2, global_links=2)
    kkt, _ = _kkt(std, 5)
    ref = None
    for R in (1, 2, 4, 8):
        for fuzz in (None, 3):
            S = factor_flat(kkt, Runtime(deterministic=True, fuzz_seed=fuzz), num_ranks=R).schur_matrices()["flat"]
            if ref is None:
                ref = S
            assert np.array_equal(S, ref)


def test_hierarchical_layers_ranks_bitwise():
    std = standard(9, seed=6)
    kkt, _ = _kkt(std, 6)
    tree = build_hierarchy(kkt.layout, 2)
    b = np.random.default_rng(2).normal(size=kkt.layout.order)
    outs = [solve_hierarchical(factor_hierarchical(kkt, tree, num_ranks=R), b) for R in (1, 3, 9)]
    assert all(np.array_equal(o, outs[0]) for o in outs)


def test_link_count_identity():
    for N in (2, 5, 9):
        std = standard(N, seed=N, local_links=2, global_links=1)
        cls = classify_links(std.problem)
        assert int(cls.counts.sum()) + cls.m_global == std.problem.link.m_eq
