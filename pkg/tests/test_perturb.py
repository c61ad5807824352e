import math

import numpy as np
import pytest

from cocyclekit import cocycle as cc
from cocyclekit import matkernel as mk
from cocyclekit import perturb as pt
from cocyclekit.cocycle import LocallyConstantCocycle
from cocyclekit.errors import ContractViolation, PeriodProductNotIdentity, TargetTooFar
from cocyclekit.symbolic import SFT, periodic_point


def rot(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def test_pin_values():
    A = LocallyConstantCocycle.constant(SFT.full(2), rot(0.1))
    M = rot(0.1) @ np.diag([1.05, 1 / 1.05])
    B = pt.pin_values(A, [((1, 2, 1), M)], 0.1)
    assert B.depth == 1
    assert np.array_equal(B.value((1, 2, 1)), M)
    assert np.array_equal(B.value((2, 2, 1)), A.value((2,)))
    with pytest.raises(TargetTooFar):
        pt.pin_values(A, [((1,), 2 * np.eye(2))], 0.1)
    with pytest.raises(ContractViolation):
        pt.pin_values(A, [((1, 2), M)], 0.1)


def test_pin_values_conflict():
    A = LocallyConstantCocycle.identity(SFT.full(2), 2)
    M = np.diag([1.01, 1 / 1.01])
    with pytest.raises(ContractViolation):
        pt.pin_values(A, [((1, 2, 1), M), ((2, 1, 2, 1, 1), M.T @ M)], 0.2)


def test_lexicographic_assignment():
    a = pt.lexicographic_assignment(3)
    assert a == {(1, 2): 0, (1, 3): 1, (2, 1): 0, (2, 3): 1, (3, 1): 0, (3, 2): 1}


@pytest.mark.parametrize("d", [2, 3])
def test_realize_fixed(rng, d):
    A = LocallyConstantCocycle.identity(SFT.full(3), d)
    targets = [mk.random_sl(rng, d, 0.15) for _ in range(2)]
    res = pt.realize_transitions_fixed(A, targets, 0.3)
    assert res.max_residual <= 1e-9
    for old, new in res.diff.values():
        assert mk.operator_norm(new - old) < 0.3
    for i, mats in pt.transition_multisets(res).items():
        assert pt.multiset_equal(mats, targets, 1e-9)
    assert res.distance < 0.3
    untouched = [w for w in res.cocycle.windows if tuple(w) not in res.diff]
    assert all(np.array_equal(res.cocycle.value(w), np.eye(d)) for w in untouched[:50])


def test_realize_permuted_assignment(rng):
    A = LocallyConstantCocycle.identity(SFT.full(3), 2)
    targets = [mk.random_sl(rng, 2, 0.1) for _ in range(2)]
    perm = {k: 1 - v for k, v in pt.lexicographic_assignment(3).items()}
    res = pt.realize_transitions_fixed(A, targets, 0.3, assignment=perm)
    assert res.max_residual <= 1e-9
    for mats in pt.transition_multisets(res).values():
        assert pt.multiset_equal(mats, targets, 1e-9)


def test_realize_on_rotation_fixed_points_rejected():
    A = LocallyConstantCocycle.constant(SFT.full(2), rot(1.0))
    with pytest.raises(ContractViolation):
        pt.realize_transitions_fixed(A, [np.eye(2)], 0.3)


def test_multiset_equal():
    I, R = np.eye(2), rot(0.2)
    assert pt.multiset_equal([I, R, I], [R, I, I], 1e-12)
    assert not pt.multiset_equal([I, R, R], [R, I, I], 1e-12)
    assert not pt.multiset_equal([I], [I, I], 1e-12)


def test_block_recode(rng):
    A = pt.identity_periodic_cocycle(SFT.full(2), 2, 1, [(1,), (1, 2)], rng, 0.2)
    assert np.allclose(A.product(periodic_point((1, 2)), 2), np.eye(2))
    rec = pt.block_recode(A, [(1,), (1, 2)])
    assert rec.N == 2 and [tuple(b) for b in rec.blocks] == [(1, 1), (1, 2)]
    for w in rec.cocycle.windows:
        ex = rec.expand(tuple(w))
        r = rec.cocycle.depth
        x = periodic_point(tuple(ex))
        # block entries equal N-step base products at the block start
        P = np.eye(2)
        for t in range(rec.N):
            c = r * rec.N + t
            P = A.value(tuple(ex[c - 1:c + 2])) @ P
        assert np.allclose(rec.cocycle.value(w), P)
    with pytest.raises(PeriodProductNotIdentity):
        pt.block_recode(cc.random_cocycle(rng, SFT.full(2), 2, 1, 0.3), [(1, 2)])


def test_realize_periodic(rng):
    A = LocallyConstantCocycle.identity(SFT.full(3), 2)
    targets = [mk.random_sl(rng, 2, 0.02) for _ in range(2)]
    res = pt.realize_transitions_periodic(A, [(1,), (2,), (3,)], targets, 1.0)
    assert res.max_residual <= 1e-9


def test_realize_periodic_two_cycle(rng):
    A = LocallyConstantCocycle.identity(SFT.full(3), 2)
    targets = [mk.random_sl(rng, 2, 0.005)]
    res = pt.realize_transitions_periodic(A, [(1, 2), (3,)], targets, 1.0)
    assert res.max_residual <= 1e-9
    for W in res.transitions.values():
        assert A.sft.is_admissible(W)


def test_hyperbolize(rng):
    sft = SFT.full(2)
    A = LocallyConstantCocycle.constant(sft, rot(0.05))
    B = pt.hyperbolize_period(A, (1, 2), 0.5, protect=[(1,)])
    assert mk.is_hyperbolic(B.product(periodic_point((1, 2)), 2), B.tol)
    assert np.allclose(B.product(periodic_point((1,)), 1), rot(0.05))
    assert cc.c0_distance(B, A.refine_depth(B.depth)) <= 0.5
    H = LocallyConstantCocycle.constant(sft, np.diag([2.0, 0.5]))
    assert pt.hyperbolize_period(H, (1,), 0.1) is H


def test_hyperbolize_d3(rng):
    A = LocallyConstantCocycle.constant(SFT.full(2), np.eye(3))
    B = pt.hyperbolize_period(A, (1, 1, 2), 0.05)
    assert mk.is_hyperbolic(B.product(periodic_point((1, 1, 2)), 3), B.tol)


@pytest.mark.parametrize("seed", range(5))
def test_random_holder_perturbation(seed):
    rng = np.random.default_rng(seed)
    A = cc.random_cocycle(rng, SFT.full(2), 2, 1, 0.3)
    B = pt.random_holder_perturbation(A, 1e-3, rng, depth=2)
    dist = cc.holder_distance(A, B)
    assert 0 < dist < 1e-3
    assert np.allclose(np.linalg.det(B.mats), 1)
    again = pt.random_holder_perturbation(A, 1e-3, np.random.default_rng(seed), depth=2)
    fresh = pt.random_holder_perturbation(A, 1e-3, np.random.default_rng(seed), depth=2)
    assert np.array_equal(again.mats, fresh.mats)
