import math

import numpy as np
import pytest

from cocyclekit import covering as cv
from cocyclekit import matkernel as mk
from cocyclekit.cocycle import LocallyConstantCocycle
from cocyclekit.errors import ContractViolation, EmptyResult, SlackExhausted
from cocyclekit.symbolic import SFT


def test_ball_membership_and_shrink():
    U = cv.ball(np.eye(2), 0.2)
    assert U.contains(np.eye(2))
    assert not U.contains(np.diag([1.3, 1 / 1.3]))
    V = cv.region_shrink(U, 0.05)
    assert V.radii[0] == pytest.approx(0.15)
    with pytest.raises(EmptyResult):
        cv.region_shrink(U, 0.3)
    with pytest.raises(ContractViolation):
        cv.region_shrink(U, 0.0)


def test_lie_basis_orthonormal():
    for d in (2, 3):
        for group, size in (("SL", d * d - 1), ("GL", d * d)):
            B = cv.lie_basis(d, group).reshape(size, -1)
            assert np.allclose(B @ B.T, np.eye(size))


def test_batch_expm_matches_scipy(rng):
    from scipy.linalg import expm

    for d in (2, 3):
        X = rng.normal(size=(20, d, d)) * 0.7
        X -= np.trace(X, axis1=1, axis2=2)[:, None, None] * np.eye(d) / d
        E = cv.batch_expm(X)
        assert max(np.abs(E[i] - expm(X[i])).max() for i in range(20)) < 1e-12


def test_mesh_density(rng):
    U = cv.Region([cv.Ball(np.eye(2), 0.1), cv.Ball(np.diag([1.2, 1 / 1.2]), 0.05)])
    rho = 0.03
    mesh = cv.build_mesh(U, rho)
    pts = cv.sample_region(U, 2000, rng, 0.5)
    for P in pts[:300]:
        assert mk.batch_norm(mesh.points - P).min() <= rho
    assert np.allclose(np.linalg.det(mesh.points), 1)


def test_scalar_interval_oracle():
    assert cv.interval_covering_exact(1.0, 7.0, (2.0, 1 / 3))
    assert not cv.interval_covering_exact(1.0, 5.0, (2.0, 1 / 3))
    ok = cv.verify_scalar_covering((2.0, 1 / 3), 1.0, 7.0, 0.05, 0.01)
    assert isinstance(ok, cv.FamilyCertificate)
    bad = cv.verify_scalar_covering((2.0, 1 / 3), 1.0, 5.0, 0.05, 0.01)
    assert isinstance(bad, cv.CounterexamplePoint)
    assert 2.5 - 0.05 <= bad.point[0, 0] <= 3.0 + 0.05


def test_lipschitz_slack():
    U = cv.scalar_interval(1.0, 7.0)
    with pytest.raises(SlackExhausted):
        cv.verify_family_covering([np.array([[2.0]])], U, 0.1, 0.1)


def test_sl2_candidate_respects_eps():
    for tau, shift, radius, phase in cv._sl2_candidates(0.5, np.random.default_rng(0)):
        fam, U = cv.design_sl2(tau, shift, radius, phase)
        assert len(fam) == 4
        assert max(mk.operator_norm(D - np.eye(2)) for D in fam) < 0.5
        assert np.allclose([np.linalg.det(D) for D in fam], 1)


def test_sl2_build(sl2_build):
    res = sl2_build
    assert res.certified and len(res.family) == 4
    cert = res.certificate
    assert cert.delta > 0
    assert cv.recheck_certificate(cert)
    assert res.audit.passed
    assert max(mk.operator_norm(D - np.eye(2)) for D in res.family) < 0.5
    assert res.region.reach() < 0.5


def test_certificate_round_trip(sl2_build):
    cert = sl2_build.certificate
    back = cv.certificate_from_dict(cert.as_dict())
    assert cv.recheck_certificate(back)
    back.witnesses[0] = (back.witnesses[0] + 1) % len(back.family)
    tampered = cv.certificate_from_dict({**cert.as_dict(), "witnesses": back.witnesses.tolist()})
    # a wrong witness may still happen to work; flipping all of them cannot
    flipped = cv.certificate_from_dict({**cert.as_dict(), "witnesses": [-1] * len(back.witnesses)})
    assert not cv.recheck_certificate(flipped)
    assert isinstance(cv.recheck_certificate(tampered), bool)


def test_smaller_family_fails(sl2_build):
    fam, U = sl2_build.family, sl2_build.region
    rep = cv.audit_covering(fam[:2], U, 2000, seed=3)
    assert not rep.passed


def test_monotone_in_family(sl2_build, rng):
    fam, U = sl2_build.family, sl2_build.region
    pts = cv.sample_region(U, 2000, rng)
    m1, _ = cv.family_margins(fam, U, pts)
    m2, _ = cv.family_margins(fam + [np.eye(2)], U, pts)
    assert (m2 >= m1).all()


def test_gl_covering(sl2_build):
    cert = sl2_build.certificate
    gl = cv.verify_gl_covering(cert, 1.0, 7.0)
    assert isinstance(gl, cv.GLCertificate)
    assert len(gl.family) == 2 * 2 * 2
    assert cv.audit_gl_covering(gl, 4000, seed=1).passed
    assert isinstance(cv.verify_gl_covering(cert, 1.0, 5.0), cv.CounterexamplePoint)
    M = 3.0 * sl2_build.family[0]
    lam, D = gl.region.split(M[None])
    assert lam[0] == pytest.approx(3.0) and np.allclose(D[0], sl2_build.family[0])


def test_cocycle_covering_constant(sl2_build):
    fam, U = sl2_build.family, sl2_build.region
    letters = {i + 1: fam[i] for i in range(4)}
    letters[5] = np.eye(2)
    A = LocallyConstantCocycle.from_letters(SFT.full(5), letters)
    lam = {(5,): [(5, b, 5) for b in range(1, 5)]}
    cert = sl2_build.certificate
    res = cv.verify_cocycle_covering(A, U, [(5,)], lam, cert.check_delta, cert.rho, mesh=cert.mesh)
    assert isinstance(res, cv.CocycleCoveringCertificate)
    assert res.max_transition_length == 2
    short = {(5,): [(5, b, 5) for b in range(1, 3)]}
    assert isinstance(cv.verify_cocycle_covering(A, U, [(5,)], short, cert.check_delta, cert.rho,
                                                 mesh=cert.mesh), cv.CocycleCounterexample)
    with pytest.raises(ContractViolation):
        cv.verify_cocycle_covering(A, U, [(5,)], {(5,): [(1, 5)]}, 0.1, 0.01)


def test_immediate_covering():
    U = cv.scalar_interval(1.0, 7.0)
    gens = [np.array([[2.0]]), np.array([[1 / 3]])]
    V, cert = cv.immediate_covering(gens, U, 1, 0.1, 0.01)
    assert cert.verify()
    pts = np.linspace(V.centers[:, 0, 0] - V.radii, V.centers[:, 0, 0] + V.radii, 7).ravel()
    for t in pts:
        assert any(V.contains(g * t) or U.contains(g * t) for g in (2.0, 1 / 3))


def test_simplex_directions(rng):
    V = cv.simplex_directions(8, mk.haar_orthogonal(rng, 8))
    assert V.shape == (9, 8)
    assert np.allclose(V.sum(0), 0, atol=1e-12)
    assert np.allclose(np.linalg.norm(V, axis=1), 1)
    u = rng.normal(size=(2000, 8))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    assert (-(u @ V.T)).max(1).min() >= 1 / 8 - 1e-12


def test_chart_ball_geometry(rng):
    U = cv.Region([cv.Ball(np.eye(3), 0.3, "chart")])
    P = cv.sample_region(U, 400, rng, boundary_share=0.5)
    dep = U.depth_many(P)
    assert np.all(dep >= -1e-12)
    assert np.abs(dep[:200]).max() < 1e-10
    assert U.reach() == pytest.approx(math.expm1(0.3))
    assert max(mk.operator_norm(M - np.eye(3)) for M in P) <= U.reach()
    V = cv.Region.from_dict(U.as_dict())
    assert V.kinds == ("chart",)
    assert cv.region_shrink(U, 0.1).kinds == ("chart",)
    with pytest.raises(ContractViolation):
        cv.build_mesh(U, 0.1)
    with pytest.raises(ContractViolation):
        cv.Region([cv.Ball([[1.0]], 0.5, "chart")], "GL")


def test_sl3_simplex_covers(rng):
    fam, U = cv.design_sl_simplex(3, 0.06, 0.3, mk.haar_orthogonal(rng, 8))
    assert len(fam) == 9
    assert np.allclose([np.linalg.det(D) for D in fam], 1)
    assert max(mk.operator_norm(D - np.eye(3)) for D in fam) < 0.5 and U.reach() < 0.5
    best, _ = cv.family_margins(fam, U, cv.sample_region(U, 4000, rng, 0.8))
    assert best.min() > 0
    # the same pushes fail for a ball much smaller than the step
    small = cv.Region([cv.Ball(np.eye(3), 0.02, "chart")])
    best, _ = cv.family_margins(fam, small, cv.sample_region(small, 500, rng, 1.0))
    assert best.min() < 0
