import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocyclekit import cocycle as cc
from cocyclekit import domination as dm
from cocyclekit import matkernel as mk
from cocyclekit.cocycle import HolderParams, LocallyConstantCocycle, Membership
from cocyclekit.errors import FormatError, ShapeMismatch, WordTooShort
from cocyclekit.symbolic import SFT, SymbolicPoint, Word, merge, periodic_point


def rot(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def rand_point(rng, m, n=12):
    core = Word(tuple(int(c) for c in rng.integers(1, m + 1, size=n)))
    return SymbolicPoint(Word((1,)), core, Word((1, 2) if m > 1 else (1,)), int(rng.integers(0, n)))


def test_evaluate_examples():
    I = LocallyConstantCocycle.identity(SFT.full(2), 2)
    assert np.array_equal(I.evaluate(periodic_point((1, 2))), np.eye(2))
    X, Y, W, Z = (mk.random_sl(np.random.default_rng(s), 2, 0.3) for s in range(4))
    A = dm.example_fig3(X, Y, W, Z)
    assert np.allclose(A.evaluate(periodic_point((1,))), np.linalg.inv(X))


def test_refinement_invariance(rng):
    A = cc.random_cocycle(rng, SFT.full(2), 2, 1)
    R = A.refine_depth(3)
    for _ in range(20):
        x = rand_point(rng, 2)
        assert np.array_equal(A.evaluate(x), R.evaluate(x))
        assert np.allclose(A.product(x, 7), R.product(x, 7), rtol=0, atol=0)


def test_products():
    sft = SFT.full(2)
    I = LocallyConstantCocycle.identity(sft, 2)
    assert np.array_equal(I.product(periodic_point((1, 2)), 9), np.eye(2))
    R = LocallyConstantCocycle.constant(sft, rot(0.3))
    assert np.allclose(R.product(periodic_point((1,)), 5), rot(1.5))
    A = LocallyConstantCocycle.from_letters(sft, {1: np.diag([2, 0.5]), 2: rot(math.pi / 2)})
    assert np.allclose(A.product(periodic_point((1, 2)), 2), rot(math.pi / 2) @ np.diag([2, 0.5]))
    assert np.array_equal(A.product(periodic_point((1,)), 0), np.eye(2))


@given(st.integers(0, 10_000), st.integers(-20, 20), st.integers(-20, 20))
def test_cocycle_identity(seed, m, n):
    rng = np.random.default_rng(seed)
    A = cc.random_cocycle(rng, SFT.full(3), 2, 1, 0.4)
    x = rand_point(rng, 3)
    lhs = A.product(x, m + n)
    rhs = A.product(x.shift(n), m) @ A.product(x, n)
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(lhs).max())


def test_transition_products(rng):
    A = cc.random_cocycle(rng, SFT.full(2), 2, 1)
    assert np.array_equal(A.transition_product((1, 2, 1)), np.eye(2))
    with pytest.raises(WordTooShort):
        A.transition_product((1, 2))
    B = cc.random_cocycle(rng, SFT.full(2), 2, 0)
    w = (1, 2, 2, 1)
    expected = B.value((2,)) @ B.value((2,)) @ B.value((1,))
    assert np.allclose(B.transition_product(w), expected, rtol=0, atol=1e-14)


def test_transition_product_is_realized(rng):
    A = cc.random_cocycle(rng, SFT.full(2), 2, 1)
    w = (1, 2, 2, 1, 1, 2, 1)
    p = A.realization_point(w)
    assert np.allclose(A.product(p, len(w) - 3), A.transition_product(w), rtol=0, atol=1e-14)


@given(st.integers(0, 10_000))
def test_merge_identity_exact(seed):
    rng = np.random.default_rng(seed)
    A = cc.random_cocycle(rng, SFT.full(2), 2, 1, 0.5)
    w = tuple(int(c) for c in rng.integers(1, 3, size=int(rng.integers(3, 9))))
    v = w[-3:] + tuple(int(c) for c in rng.integers(1, 3, size=int(rng.integers(0, 6))))
    u = merge(w, v, 3)
    assert np.array_equal(A.transition_product(u), A.transition_product(v, start=A.transition_product(w)))


def test_distances(rng):
    sft = SFT.full(2)
    A = cc.random_cocycle(rng, sft, 2, 1)
    assert cc.c0_distance(A, A) == 0
    E = 0.01 * np.array([[1.0, 2.0], [0.0, -1.0]])
    key = (1, 2, 1)
    B = A.with_entries({key: A.value(key) + E}, group="GL")
    assert cc.c0_distance(A, B) == pytest.approx(mk.operator_norm(E))
    assert cc.c0_distance(A, B) == cc.c0_distance(B, A)
    with pytest.raises(ShapeMismatch):
        cc.c0_distance(A, LocallyConstantCocycle.identity(SFT.full(3), 2))


def test_holder_examples():
    sft = SFT.full(2)
    assert cc.holder_seminorm(LocallyConstantCocycle.constant(sft, rot(0.2))) == 0
    A = LocallyConstantCocycle.from_letters(sft, {1: np.eye(2), 2: np.diag([1.1, 1 / 1.1])})
    assert cc.holder_seminorm(A) == pytest.approx(0.1)
    D = cc.random_cocycle(np.random.default_rng(1), sft, 2, 2)
    assert cc.holder_seminorm(D, HolderParams(1.0, 2.0 ** -2)) == 0


def _brute_seminorm(A, alpha):
    best = 0.0
    ws, mats = A.window_array, A.mats
    k = A.depth
    for i in range(len(ws)):
        for j in range(len(ws)):
            diff = np.flatnonzero(ws[i] != ws[j])
            if len(diff):
                dist = 2.0 ** -min(abs(diff - k))
                best = max(best, mk.operator_norm(mats[i] - mats[j]) / dist**alpha)
    return best


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_holder_seminorm_oracle(rng, alpha):
    A = cc.random_cocycle(rng, SFT.full(2), 2, 2)
    assert cc.holder_seminorm(A, HolderParams(alpha)) == pytest.approx(_brute_seminorm(A, alpha), rel=1e-12)


def test_holder_distance(rng):
    sft = SFT.full(2)
    A = cc.random_cocycle(rng, sft, 2, 1)
    assert cc.holder_distance(A, A) == 0
    E = np.array([[0.0, 0.01], [0.0, 0.0]])
    B = A.with_entries({tuple(w): A.value(w) + E for w in A.windows}, group="GL")
    assert cc.holder_distance(A, B) == pytest.approx(mk.operator_norm(E))
    for _ in range(20):
        B, C = (cc.random_cocycle(rng, sft, 2, 1) for _ in range(2))
        assert cc.holder_distance(A, C) <= cc.holder_distance(A, B) + cc.holder_distance(B, C) + 1e-12


def test_renormalize():
    sft = SFT.full(2)
    A = cc.random_cocycle(np.random.default_rng(3), sft, 2, 1)
    assert np.allclose(A.renormalize_gl().mats, A.mats)
    G = LocallyConstantCocycle.constant(sft, 2 * np.eye(2), group="GL")
    assert np.allclose(G.renormalize_gl().mats, np.eye(2))


def test_qc_trace():
    sft = SFT.full(2)
    R = LocallyConstantCocycle.constant(sft, rot(0.7))
    x = periodic_point((1, 2))
    tr = cc.qc_trace(R, x, 30)
    assert np.allclose(tr.ratio, 1)
    assert cc.membership_qc(R, x, 1.0, 30).status is Membership.HOLDS_UP_TO_HORIZON
    H = LocallyConstantCocycle.constant(sft, np.diag([2.0, 0.5]))
    res = cc.membership_bounded(H, x, 10.0, 30)
    assert res.status is Membership.VIOLATED and res.first_violation == math.ceil(math.log2(10))
    t0 = cc.qc_trace(H, x, 5)
    i0 = list(t0.n).index(0)
    assert t0.norm[i0] == t0.norm_inv[i0] == t0.ratio[i0] == 1


def test_squaring_lemma(rng):
    for _ in range(50):
        A = cc.random_cocycle(rng, SFT.full(2), 2, 1, 0.3)
        x = rand_point(rng, 2)
        P = A.products_along(x, 15)
        ratios = mk.batch_norm(P) * mk.batch_norm(np.linalg.inv(P))
        m, n = sorted(rng.choice(16, 2, replace=False))
        kappa = ratios[: n + 1].max()
        block = P[n] @ np.linalg.inv(P[m])
        assert mk.operator_norm(block) * mk.operator_norm(np.linalg.inv(block)) <= kappa**2 * (1 + 1e-12)


def test_finite_close_bound(rng):
    sft = SFT.full(3)
    for _ in range(100):
        A = cc.random_cocycle(rng, sft, 2, 1, 0.4)
        B = A.with_entries({tuple(w): mk.random_sl(rng, 2, 0.05) @ A.value(w) for w in A.windows})
        k = int(rng.integers(1, 10))
        x = rand_point(rng, 3)
        assert mk.operator_norm(A.product(x, k) - B.product(x, k)) <= cc.finite_close_bound(A, B, k) * (1 + 1e-12)


def test_text_round_trip(rng, tmp_path):
    A = cc.random_cocycle(rng, SFT(3, np.array([[1, 1, 0], [0, 1, 1], [1, 1, 1]])), 3, 1)
    A.save(tmp_path / "a.txt")
    B = LocallyConstantCocycle.load(tmp_path / "a.txt")
    assert np.array_equal(A.mats, B.mats) and B.depth == 1
    with pytest.raises(FormatError):
        LocallyConstantCocycle.from_text("cocycle v2\n")
