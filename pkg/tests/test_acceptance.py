"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
quantities before asserting, so the report is visible under ``pytest -v``.
"""

import itertools
import math
import time

import numpy as np
import pytest

from cocyclekit import cocycle as cc
from cocyclekit import covering as cv
from cocyclekit import domination as dm
from cocyclekit import matkernel as mk
from cocyclekit import orbit as ob
from cocyclekit import perturb as pt
from cocyclekit.cocycle import HolderParams, LocallyConstantCocycle
from cocyclekit.symbolic import SFT, SymbolicPoint, Word, merge

CACHE: dict = {}


def report(capsys, n, ok, **info):
    detail = " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in info.items())
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def random_point(rng, m, n=60, origin=None):
    core = Word(tuple(int(c) for c in rng.integers(1, m + 1, size=n)))
    left = Word((int(rng.integers(1, m + 1)),))
    right = Word(tuple(int(c) for c in rng.integers(1, m + 1, size=2)))
    return SymbolicPoint(left, core, right, n // 2 if origin is None else origin)


def rel_err(P, Q, ref):
    return float(np.abs(P - Q).max() / max(np.abs(ref).max(), 1e-300))


def test_criterion_1_algebraic_exactness(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    pool = {}
    for d, m, k in itertools.product((2, 3), (2, 3, 5), (0, 1, 2)):
        pool[(d, m, k)] = [cc.random_cocycle(rng, SFT.full(m), d, k, 0.3) for _ in range(2)]
    keys = list(pool)
    worst_c = worst_m = 0.0
    # max |lhs - rhs| / |lhs| for same-sign and mixed-sign (m, n), reported only
    plain = {True: 0.0, False: 0.0}
    for inst in range(1000):
        d, m, k = keys[inst % len(keys)]
        A = pool[(d, m, k)][int(rng.integers(2))]
        x = random_point(rng, m)
        a, b = (int(v) for v in rng.integers(-20, 21, size=2))
        lhs = A.product(x, a + b)
        P, Q = A.product(x.shift(b), a), A.product(x, b)
        rhs = P @ Q
        # normwise relative error of a product: rounding is controlled by |P| |Q|
        worst_c = max(worst_c, mk.operator_norm(lhs - rhs) / (mk.operator_norm(P) * mk.operator_norm(Q)))
        plain[a * b >= 0] = max(plain[a * b >= 0], rel_err(lhs, rhs, lhs))
        n = 2 * k + 1
        w = tuple(int(c) for c in rng.integers(1, m + 1, size=n + int(rng.integers(0, 8))))
        v = w[-n:] + tuple(int(c) for c in rng.integers(1, m + 1, size=int(rng.integers(0, 8))))
        Pw, Pv = A.transition_product(w), A.transition_product(v)
        big = A.transition_product(merge(w, v, n))
        worst_m = max(worst_m, mk.operator_norm(big - Pv @ Pw) / (mk.operator_norm(Pv) * mk.operator_norm(Pw)))
    dt = time.perf_counter() - t0
    ok = worst_c <= 1e-12 and worst_m <= 1e-12 and dt < 30
    report(capsys, 1, ok, cocycle_rel=worst_c, merge_rel=worst_m, same_sign_rel_to_lhs=plain[True],
           mixed_sign_rel_to_lhs=plain[False], seconds=dt)


def test_criterion_2_proof_bounds(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    fc_viol = hb_viol = 0
    best_ratio = math.inf
    for inst in range(1000):
        m, d, k = (2, 3)[inst % 2], (2, 3)[(inst // 2) % 2], inst % 3
        A = cc.random_cocycle(rng, SFT.full(m), d, k, 0.3)
        s = 10.0 ** rng.uniform(-6, -1)
        B = A.with_entries({tuple(w): mk.random_sl(rng, d, s) @ A.value(w) for w in A.windows})
        n = int(rng.integers(1, 21))
        x = random_point(rng, m)
        diff = mk.operator_norm(A.product(x, n) - B.product(x, n))
        if diff > cc.finite_close_bound(A, B, n):
            fc_viol += 1
    for inst in range(1000):
        m, d, k = (2, 3)[inst % 2], (2, 3)[(inst // 2) % 2], inst % 3
        B = cc.random_cocycle(rng, SFT.full(m), d, k, float(rng.uniform(0.05, 0.4)))
        steps = int(rng.integers(1, 25))
        x = random_point(rng, m, 80, origin=10)
        # y keeps every coordinate of x up to index `steps` and is free afterwards
        cut = 10 + steps + 1
        tail = tuple(int(c) for c in rng.integers(1, m + 1, size=80 - cut))
        y = SymbolicPoint(x.left_period, Word(tuple(x.core)[:cut] + tail), Word((1,)), 10)
        L = int(rng.integers(1, 6))
        times = sorted(set(list(range(0, steps, L)) + [steps]))
        K = cc.checkpoint_constant(B, [x, y], times)
        bound = cc.unstable_difference_bound(1.0, K, B.norm, L, cc.holder_seminorm(B, HolderParams(1.0)))
        diff = mk.operator_norm(B.product(x, steps) - B.product(y, steps))
        if not diff < bound:
            hb_viol += 1
        elif diff > 0:
            best_ratio = min(best_ratio, bound / diff)
    dt = time.perf_counter() - t0
    ok = fc_viol == 0 and hb_viol == 0 and best_ratio <= 1e6 and dt < 60
    report(capsys, 2, ok, finite_close_violations=fc_viol, holder_violations=hb_viol,
           tightest_ratio=best_ratio, seconds=dt)


def test_criterion_3_covering_construction(capsys):
    t0 = time.perf_counter()
    res = cv.build_sl_covering_family(2, 0.5, cv.SearchConfig(seed=0))
    dt2 = time.perf_counter() - t0
    audit2 = cv.audit_covering(res.family, res.region, 10_000, seed=2024)
    dist2 = max(mk.operator_norm(D - np.eye(2)) for D in res.family)
    ok2 = (len(res.family) == 4 and dist2 < 0.5 and res.certificate is not None and res.certificate.delta > 0
           and cv.recheck_certificate(res.certificate) and audit2.passed and dt2 < 120)
    CACHE["sl2"] = res
    t0 = time.perf_counter()
    res3 = cv.build_sl_covering_family(3, 0.5, cv.SearchConfig(seed=0))
    dt3 = time.perf_counter() - t0
    audit3 = cv.audit_covering(res3.family, res3.region, 10_000, seed=2024)
    dist3 = max(mk.operator_norm(D - np.eye(3)) for D in res3.family)
    ok3 = (len(res3.family) == 9 and dist3 < 0.5 and res3.region.reach() < 0.5 and res3.audit.passed
           and audit3.passed and dt3 < 600)
    report(capsys, 3, ok2 and ok3, d2_delta=res.certificate.delta if res.certificate else float("nan"),
           d2_audit_failures=audit2.failures, d2_seconds=dt2, d3_audit_failures=audit3.failures,
           d3_audit_min_margin=audit3.min_margin, d3_seconds=dt3)


def test_criterion_4_gl_scaling(capsys):
    sl = CACHE.get("sl2") or cv.build_sl_covering_family(2, 0.5, cv.SearchConfig(seed=0))
    gl = cv.verify_gl_covering(sl.certificate, 1.0, 7.0)
    gl_ok = isinstance(gl, cv.GLCertificate) and len(gl.family) == 2 * 2**2
    audit = cv.audit_gl_covering(gl, 10_000, seed=7) if gl_ok else None
    exact7 = cv.interval_covering_exact(1.0, 7.0, (2.0, 1 / 3))
    exact5 = cv.interval_covering_exact(1.0, 5.0, (2.0, 1 / 3))
    cert5 = cv.verify_gl_covering(sl.certificate, 1.0, 5.0)
    ok = gl_ok and audit.passed and exact7 and not exact5 and isinstance(cert5, cv.CounterexamplePoint)
    report(capsys, 4, ok, family=len(gl.family) if gl_ok else 0, b7a=exact7, b5a=exact5,
           gl_audit_failures=audit.failures if audit else -1)


def test_criterion_5_pipeline(capsys):
    t0 = time.perf_counter()
    A = LocallyConstantCocycle.identity(SFT.full(5), 2)
    C = pt.make_covering_cocycle(A, 0.5)
    bud = ob.epsilon_budget(C.certificate, C.cocycle)
    L = C.certificate.max_transition_length
    good, worst_period, worst_dist = 0, 0.0, 0.0
    for s in range(20):
        B = pt.random_holder_perturbation(C.cocycle, bud.epsilon, np.random.default_rng([5, s]),
                                          depth=C.cocycle.depth + 1)
        hd = cc.holder_distance(C.cocycle, B)
        plan = ob.build_bounded_orbit(C.certificate, C.cocycle, B, 1000)
        chk = ob.verify_orbit_plan(plan, B)
        rep = ob.two_sided_bound(plan, B, L)
        worst_dist = max(worst_dist, hd / bud.epsilon)
        worst_period = max(worst_period, rep.period_max / rep.K**2)
        good += int(hd < bud.epsilon and plan.steps >= 1000 and chk.ok and rep.forward_ok and rep.period_ok)
    dt = time.perf_counter() - t0
    CACHE["pipeline"] = C
    ok = bud.epsilon > 0 and good == 20 and dt < 600
    report(capsys, 5, ok, epsilon_budget=bud.epsilon, successes=f"{good}/20", max_dist_share=worst_dist,
           max_period_over_K2=worst_period, seconds=dt)


def test_criterion_6_oracle(capsys):
    C = CACHE.get("pipeline")
    if C is None:
        C = pt.make_covering_cocycle(LocallyConstantCocycle.identity(SFT.full(5), 2), 0.5)
    A = C.cocycle
    plan = ob.build_bounded_orbit(C.certificate, A, A, 20)
    K = ob.two_sided_bound(plan, A, C.certificate.max_transition_length).K
    _, value = ob.brute_force_min_max_norm(A, 12)
    _, one = ob.brute_force_min_max_norm(LocallyConstantCocycle.identity(SFT.full(2), 2), 12)
    ok = value <= K and one == 1.0
    report(capsys, 6, ok, oracle=value, K=K, identity_oracle=one)


def test_criterion_7_attack(capsys):
    rng = np.random.default_rng(7)
    B = cc.random_cocycle(rng, SFT.full(3), 3, 1, 0.3)
    x0 = random_point(rng, 3, 80, origin=10)
    res = ob.unbounded_attack(B, x0, 1.1, 50)
    ok = (res.measured >= res.kappa_bound and res.ratio >= 1
          and abs(res.multiplicative_size - res.stretch_size) <= 1e-9
          and res.c0_size <= res.c0_bound + 1e-9)
    report(capsys, 7, ok, measured=res.measured, kappa_bound=res.kappa_bound, ratio=res.ratio,
           size_gap=abs(res.multiplicative_size - res.stretch_size), c0_size=res.c0_size, c0_bound=res.c0_bound)


def test_criterion_8_domination(capsys):
    sft = SFT.full(2)
    diag = dm.domination_scan(LocallyConstantCocycle.constant(sft, np.diag([2.0, 0.5])), 1, 12)
    c, s = math.cos(1.0), math.sin(1.0)
    flat = []
    for M in (np.eye(2), np.array([[c, -s], [s, c]])):
        rep = dm.domination_scan(LocallyConstantCocycle.constant(sft, M), 1, 12)
        flat.append(rep.m_found is None and len(rep.worst_ratio) == 12
                    and all(abs(r - 1) <= 1e-12 for r in rep.worst_ratio.values()))
    H = np.diag([2.0, 0.5])
    spec = dm.periodic_spectrum_scan(dm.example_fig2(H, H), 6)
    ok = diag.m_found == 1 and abs(diag.worst_ratio[1] - 0.25) <= 1e-12 and all(flat) and spec.all_hyperbolic
    report(capsys, 8, ok, diag_ratio=diag.worst_ratio[1], no_gap=all(flat), fig2_words=len(spec.entries),
           fig2_hyperbolic=spec.count(lambda e: e.hyperbolic))


def test_criterion_9_census(capsys):
    d3 = dm.hyperbolicity_census(dm.gaussian_tuple_sampler(3, 2), 1000, 4, 3, seed=9)
    d2 = dm.hyperbolicity_census(dm.gaussian_tuple_sampler(2, 2), 1000, 4, 2, seed=9)
    ok = d3.spectral_fraction >= 0.999 and d2.spectral_fraction < d3.spectral_fraction
    report(capsys, 9, ok, d3_fraction=d3.spectral_fraction, d3_witness=d3.witness_fraction,
           d2_fraction=d2.spectral_fraction)


def test_criterion_10_realization(capsys):
    rng = np.random.default_rng(10)
    eps = 0.5
    worst_res, worst_change, multisets, total = 0.0, 0.0, True, 0
    for d in (2, 3):
        A = LocallyConstantCocycle.identity(SFT.full(3), d)
        for _ in range(25):
            targets = [mk.random_sl(rng, d, 0.3) for _ in range(2)]
            perm = {}
            for i in range(1, 4):
                order = rng.permutation(2)
                for s, j in enumerate(j for j in range(1, 4) if j != i):
                    perm[(i, j)] = int(order[s])
            res = pt.realize_transitions_fixed(A, targets, eps, assignment=perm)
            worst_res = max(worst_res, res.max_residual)
            worst_change = max(worst_change, max(mk.operator_norm(n - o) for o, n in res.diff.values()))
            multisets &= all(pt.multiset_equal(ms, targets, 1e-9) for ms in pt.transition_multisets(res).values())
            total += len(targets)
    ok = worst_res <= 1e-9 and worst_change < eps and multisets and total == 100
    report(capsys, 10, ok, targets=total, max_residual=worst_res, max_entry_change=worst_change,
           multisets=multisets)
