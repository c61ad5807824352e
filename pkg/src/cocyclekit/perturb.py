"""Perturbations that realize prescribed transition products.

Everything is done by rewriting table entries on deep cylinders of a refined
cocycle, so unmodified entries stay bit-identical and every change is a
finite, auditable diff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from . import covering as cv
from . import matkernel as mk
from .cocycle import HolderParams, LocallyConstantCocycle, c0_distance, holder_distance
from .errors import (
    CertificateFailed,
    ContractViolation,
    DimensionTooSmall,
    FragmentationBudget,
    PeriodProductNotIdentity,
    SearchExhausted,
    TargetTooFar,
)
from .symbolic import SFT, Word, as_word, periodic_point

DEFAULT_TABLE_CAP = 2_000_000


def _check_table_size(sft: SFT, depth: int, cap: int) -> None:
    size = sft.count_words(2 * depth + 1)
    if size > cap:
        raise FragmentationBudget("refined table would be too large", depth=depth, windows=size, cap=cap)


# ---------------------------------------------------------------------------
# pinning


def pin_values(A: LocallyConstantCocycle, targets, eps: float, cap: int = DEFAULT_TABLE_CAP) -> LocallyConstantCocycle:
    """Refine A and set the listed centered cylinders to the given matrices.

    ``targets`` is a sequence of (window, matrix) with windows of odd length;
    every entry of A on a pinned cylinder must be within eps of its target.
    """
    targets = [(as_word(w), np.asarray(M, dtype=float)) for w, M in targets]
    if not targets:
        return A
    for w, _ in targets:
        if len(w) % 2 == 0:
            raise ContractViolation("pinned windows must have odd length", window=list(w))
    K = max(A.depth, max(len(w) // 2 for w, _ in targets))
    _check_table_size(A.sft, K, cap)
    B = A.refine_depth(K)
    updates: dict[tuple, np.ndarray] = {}
    for w, M in targets:
        r = len(w) // 2
        hits = [i for i, win in enumerate(B.windows) if tuple(win[K - r:K + r + 1]) == tuple(w)]
        if not hits:
            raise ContractViolation(f"{tuple(w)} is not admissible")
        for i in hits:
            key = tuple(B.windows[i])
            gap = mk.operator_norm(M - B.mats[i])
            if gap >= eps:
                raise TargetTooFar("target is not within eps of the current value", window=list(key), gap=gap, eps=eps)
            if key in updates and not np.array_equal(updates[key], M):
                raise ContractViolation("conflicting targets on one cylinder", window=list(key))
            updates[key] = M
    return B.with_entries(updates)


# ---------------------------------------------------------------------------
# realization at identity fixed points


@dataclass
class RealizationResult:
    cocycle: LocallyConstantCocycle
    depth: int
    n0: int
    transitions: dict
    assignment: dict
    distance: float
    residuals: dict
    diff: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def marked_words(self) -> list[tuple]:
        return sorted({tuple(w[: 2 * self.depth + 1]) for w in self.transitions.values()})

    def lam(self) -> dict:
        out: dict = {}
        for (i, j), w in sorted(self.transitions.items()):
            out.setdefault(tuple(w[: 2 * self.depth + 1]), []).append(tuple(w))
        return out

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "n0": self.n0,
            "distance": self.distance,
            "transitions": {f"{i},{j}": list(w) for (i, j), w in sorted(self.transitions.items())},
            "assignment": {f"{i},{j}": s for (i, j), s in sorted(self.assignment.items())},
            "residuals": {f"{i},{j}": r for (i, j), r in sorted(self.residuals.items())},
            "diff": {",".join(map(str, w)): {"old": mk.matrix_to_list(o), "new": mk.matrix_to_list(n)}
                     for w, (o, n) in sorted(self.diff.items())},
        }


def heteroclinic_word(i: int, j: int, n: int) -> Word:
    return Word((i,) * (2 * n + 1) + (j,) * (2 * n + 1))


def lexicographic_assignment(m: int) -> dict:
    """(i, j) -> index of the target, j != i visited in increasing order."""
    out = {}
    for i in range(1, m + 1):
        for s, j in enumerate(x for x in range(1, m + 1) if x != i):
            out[(i, j)] = s
    return out


def realize_transitions_fixed(A: LocallyConstantCocycle, targets, eps: float, assignment: dict | None = None,
                              cap: int = DEFAULT_TABLE_CAP, frag_cap: int = 10_000) -> RealizationResult:
    """Perturb A (Id at every fixed point) so that w_ij = i^{2n+1} j^{2n+1}
    has transition product S_{assignment(i, j)}.

    The old product along w_ij only involves the 2l windows straddling the
    junction; the correction (A_[w_ij>)^{-1} S is cut into n0 near-identity
    factors written on the windows i^{2n+1-t} j^t, t = 1..n0, where A is Id.
    Shorter factor lists are padded with Id at the first-applied end.
    """
    sft = A.sft
    m, l, d = sft.m, A.depth, A.dim
    targets = [np.asarray(S, dtype=float) for S in targets]
    if m < 2:
        raise ContractViolation("need at least two letters")
    if len(targets) != m - 1:
        raise ContractViolation("expected m - 1 targets", targets=len(targets), m=m)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i != j and not (sft.allowed(i, j) and sft.allowed(i, i)):
                raise ContractViolation("heteroclinic words need i -> i and i -> j allowed", i=i, j=j)
        fixed = A.value((i,) * (2 * l + 1))
        if np.abs(fixed - np.eye(d)).max() > A.tol.equality_tol:
            raise ContractViolation(f"A is not the identity at the fixed point of {i}")
    assignment = assignment or lexicographic_assignment(m)
    pairs = sorted(assignment)

    def old_product(i, j, n):
        # old entries along w_ij read the depth-l window at the center
        w = heteroclinic_word(i, j, n)
        P = np.eye(d)
        for t in range(2 * n + 1):
            P = A.value(w[t + n - l: t + n + l + 1]) @ P
        return P

    frags = {}
    for i, j in pairs:
        corr = np.linalg.solve(old_product(i, j, l), targets[assignment[(i, j)]])
        frags[(i, j)] = mk.fragment(corr, eps, frag_cap, A.tol)
    n0 = max(len(f) for f in frags.values())
    n = n0 + l
    _check_table_size(sft, n, cap)
    B = A.refine_depth(n)
    updates, diff, trans = {}, {}, {}
    for i, j in pairs:
        f = frags[(i, j)]
        f = [np.eye(d)] * (n0 - len(f)) + list(f)
        w = heteroclinic_word(i, j, n)
        trans[(i, j)] = w
        for t in range(1, n0 + 1):
            key = tuple(w[t:t + 2 * n + 1])
            updates[key] = f[t - 1]
            diff[key] = (B.value(key), f[t - 1])
    At = B.with_entries(updates)
    residuals = {(i, j): float(np.abs(At.transition_product(trans[(i, j)]) - targets[assignment[(i, j)]]).max())
                 for i, j in pairs}
    return RealizationResult(At, n, n0, trans, dict(assignment), c0_distance(At, B), residuals, diff)


def transition_multisets(result: RealizationResult) -> dict:
    """i -> list of realized transition products from the fixed point of i."""
    out: dict = {}
    for (i, j), w in sorted(result.transitions.items()):
        out.setdefault(i, []).append(result.cocycle.transition_product(w))
    return out


def multiset_equal(mats, targets, tol: float) -> bool:
    """Equality of finite multisets of matrices up to tol, by greedy matching."""
    mats, targets = list(mats), list(targets)
    if len(mats) != len(targets):
        return False
    used = [False] * len(targets)
    for M in mats:
        for s, S in enumerate(targets):
            if not used[s] and np.abs(M - S).max() <= tol:
                used[s] = True
                break
        else:
            return False
    return True


# ---------------------------------------------------------------------------
# periodic points through block recoding


@dataclass
class BlockRecoding:
    period_words: list[Word]
    N: int
    blocks: list[Word]
    cocycle: LocallyConstantCocycle
    base: LocallyConstantCocycle

    def expand(self, block_word) -> Word:
        return Word(tuple(x for c in block_word for x in self.blocks[c - 1]))


def block_recode(A: LocallyConstantCocycle, period_words, cap: int = DEFAULT_TABLE_CAP) -> BlockRecoding:
    """Induced cocycle over blocks b_i = a_i^{N/|a_i|}, N the product of the periods.

    B(c_{-r} .. c_r) is A_N at the expansion with block c_0 at positions
    0..N-1, where r = ceil(l/N) blocks cover the depth-l context.
    """
    words = [as_word(a) for a in period_words]
    sft = A.sft
    d = A.dim
    for a in words:
        if not sft.is_cyclic(a):
            raise ContractViolation(f"{tuple(a)} is not a cyclic word")
        P = A.product(periodic_point(a), len(a))
        if np.abs(P - np.eye(d)).max() > A.tol.equality_tol:
            raise PeriodProductNotIdentity(f"period product of {tuple(a)} is not Id",
                                           deviation=float(np.abs(P - np.eye(d)).max()))
    N = math.prod(len(a) for a in words)
    blocks = [Word(tuple(a) * (N // len(a))) for a in words]
    mb = len(blocks)
    adj = np.array([[int(sft.allowed(b[-1], c[0])) for c in blocks] for b in blocks], dtype=np.int64)
    bsft = SFT(mb, adj)
    r = -(-A.depth // N)
    _check_table_size(bsft, r, cap)
    table = {}
    for cw in bsft.words(2 * r + 1):
        ex = tuple(x for c in cw for x in blocks[c - 1])
        start = r * N
        P = np.eye(d)
        for t in range(N):
            c = start + t
            P = A.value(ex[c - A.depth: c + A.depth + 1]) @ P
        table[tuple(cw)] = P
    B = LocallyConstantCocycle(bsft, r, table, A.group, A.tol)
    return BlockRecoding(words, N, blocks, B, A)


def realize_transitions_periodic(A: LocallyConstantCocycle, period_words, targets, eps: float,
                                 cap: int = DEFAULT_TABLE_CAP) -> RealizationResult:
    """Realize targets between identity periodic orbits.

    The block cocycle is realized with budget eps ||A||^{-N d}; the change is
    pulled back to the last letter of each block: there the new entry is
    B~(c) B(c)^{-1} A(x), so along a block the N base factors multiply to
    B~(c).  Returned transitions are base words, one extra period of the
    first orbit on the left so that base times start at block starts.
    """
    rec = block_recode(A, period_words, cap)
    B, N, d = rec.cocycle, rec.N, A.dim
    if N == 1:
        res = realize_transitions_fixed(B, targets, eps, cap=cap)
        return _relabel_fixed(res, rec)
    eps_b = eps * max(A.norm, 1.0) ** (-N * d)
    res = realize_transitions_fixed(B, targets, eps_b, cap=cap)
    Bt, nb = res.cocycle, res.depth
    # a base window centered on the last letter of block 0 sees blocks -nb..nb
    nbase = (nb + 1) * N - 1
    _check_table_size(A.sft, nbase, cap)
    Ar = A.refine_depth(nbase)
    Bref = B.refine_depth(nb)
    updates, diff = {}, {}
    bsft = B.sft
    for key in res.diff:
        corr = Bt.value(key) @ Bref.invs[int(Bref.index_of(np.array(key)[None])[0])]
        # the base window reaches N-1 letters into the block after the window
        for c in range(1, bsft.m + 1):
            if not bsft.allowed(key[-1], c):
                continue
            ex = rec.expand(tuple(key) + (c,))
            center = nb * N + N - 1
            base_key = tuple(ex[center - nbase: center + nbase + 1])
            new = corr @ Ar.value(base_key)
            if base_key in updates and not np.allclose(updates[base_key], new, rtol=0, atol=1e-14):
                raise ContractViolation("block windows collide after expansion", window=list(base_key))
            updates[base_key] = new
            diff[base_key] = (Ar.value(base_key), new)
    At = Ar.with_entries(updates)
    trans, residuals = {}, {}
    for (i, j), w in res.transitions.items():
        W = Word(tuple(rec.blocks[i - 1][1:]) + tuple(rec.expand(w)))
        trans[(i, j)] = W
        residuals[(i, j)] = float(np.abs(At.transition_product(W) - np.asarray(targets[res.assignment[(i, j)]])).max())
    return RealizationResult(At, nbase, res.n0, trans, res.assignment, c0_distance(At, Ar), residuals, diff)


def _relabel_fixed(res: RealizationResult, rec: BlockRecoding) -> RealizationResult:
    """Period-one case: block letters are base letters, possibly renamed."""
    letters = [b[0] for b in rec.blocks]
    if letters == list(range(1, rec.base.sft.m + 1)):
        return res
    raise ContractViolation("period-one orbits must be the fixed points of every letter, in order")


# ---------------------------------------------------------------------------
# covering cocycles near the identity


@dataclass
class CoveringCocycle:
    cocycle: LocallyConstantCocycle
    certificate: cv.CocycleCoveringCertificate
    realization: RealizationResult
    family: cv.BuildResult
    attempts: list

    def as_dict(self) -> dict:
        return {
            "certificate": self.certificate.as_dict(with_witnesses=False),
            "realization": self.realization.as_dict(),
            "family": self.family.as_dict(),
            "attempts": self.attempts,
        }


def make_covering_cocycle(A: LocallyConstantCocycle, eps: float, family: cv.BuildResult | None = None,
                          cfg: cv.SearchConfig | None = None, schedule=(1.0, 0.9, 0.75, 0.5)) -> CoveringCocycle:
    """Realize a certified covering family as transitions between the fixed points.

    Needs m > d^2 letters so that each fixed point has d^2 outgoing
    heteroclinic words.  The cocycle covering is verified on the family's mesh;
    on failure delta is lowered along ``schedule`` before giving up.
    """
    d, m = A.dim, A.sft.m
    if m <= d * d:
        raise ContractViolation("need more than d^2 identity fixed points", m=m, d=d)
    if family is None:
        family = cv.build_sl_covering_family(d, eps, cfg)
    if family.certificate is None:
        raise CertificateFailed("the covering family is not certified", params=family.params)
    fam = family.family
    targets = [fam[s % len(fam)] for s in range(m - 1)]
    res = realize_transitions_fixed(A, targets, eps)
    fc = family.certificate
    attempts = []
    for f in schedule:
        delta = fc.check_delta * f
        try:
            cert = cv.verify_cocycle_covering(res.cocycle, fc.region, res.marked_words(), res.lam(), delta, fc.rho,
                                              mesh=fc.mesh)
        except cv.SlackExhausted as exc:
            attempts.append({"delta": delta, "error": exc.report()})
            continue
        if isinstance(cert, cv.CocycleCoveringCertificate):
            attempts.append({"delta": delta, "certified": cert.delta})
            return CoveringCocycle(res.cocycle, cert, res, family, attempts)
        attempts.append({"delta": delta, "margin": cert.point.best_margin})
    raise CertificateFailed("no delta in the retry schedule certified the cocycle", attempts=attempts)


# ---------------------------------------------------------------------------
# synthetic inputs and hyperbolic periods


def identity_periodic_cocycle(sft: SFT, d: int, depth: int, period_words, rng: np.random.Generator,
                              scale: float = 0.3) -> LocallyConstantCocycle:
    """Random SL cocycle whose period products along the given orbits are Id.

    The depth must make the windows along each orbit distinct; the window at
    the last time of each orbit receives the inverse of the other factors.
    """
    from .cocycle import random_cocycle

    A = random_cocycle(rng, sft, d, depth, scale)
    updates = {}
    for a in period_words:
        a = as_word(a)
        p = periodic_point(a)
        wins = [p.window(t - depth, t + depth) for t in range(len(a))]
        if len(set(wins)) != len(wins):
            raise ContractViolation("depth does not separate the orbit", word=list(a))
        if any(w in updates for w in wins):
            raise ContractViolation("orbits share windows at this depth", word=list(a))
        P = np.eye(d)
        for w in wins[:-1]:
            P = A.value(w) @ P
        for w in wins[:-1]:
            updates[w] = A.value(w)
        updates[wins[-1]] = np.linalg.inv(P)
    return A.with_entries(updates)


def _separating_window(A: LocallyConstantCocycle, p: Word, protect, max_depth: int = 16) -> tuple:
    n = len(p)
    x = periodic_point(p)
    for K in range(A.depth, max_depth + 1):
        target = x.window(n - 1 - K, n - 1 + K)
        others = {x.window(t - K, t + K) for t in range(n - 1)}
        for q in protect:
            y = periodic_point(q)
            others |= {y.window(t - K, t + K) for t in range(len(q))}
        if target not in others:
            return target
    raise ContractViolation("cannot separate the orbit from the protected ones", max_depth=max_depth)


def _sym2(t: float, theta: float) -> np.ndarray:
    c, sn = math.cos(theta), math.sin(theta)
    R = np.array([[c, -sn], [sn, c]])
    return R @ np.diag([math.exp(t), math.exp(-t)]) @ R.T


def hyperbolize_period(A: LocallyConstantCocycle, p, delta: float, protect=(), steps: int = 64) -> LocallyConstantCocycle:
    """Change the last factor along the orbit of p by at most delta so the
    period product becomes hyperbolic; protected orbits are not touched.

    With P the period product and F the last factor, the new factor is H F
    where P H is hyperbolic (hence so is H P, a conjugate): H runs along the
    hyperbolizing curve for d > 2 and through symmetric directions for d = 2.
    """
    p = as_word(p)
    x = periodic_point(p)
    P = A.product(x, len(p))
    if mk.is_hyperbolic(P, A.tol):
        return A
    d = A.dim
    F = A.value(x.window(len(p) - 1 - A.depth, len(p) - 1 + A.depth))
    budget = delta / mk.operator_norm(F)
    if d > 2:
        curves = [lambda t: mk.hyperbolizing_curve(P, t)]
    elif d == 2:
        curves = [(lambda th: (lambda t: _sym2(t, th)))(th) for th in np.linspace(0, math.pi, 8, endpoint=False)]
    else:
        raise DimensionTooSmall("d must be at least 2")
    for curve in curves:
        # largest t whose H stays inside the budget, found by doubling then bisection
        lo, hi = 0.0, 1.0
        while mk.operator_norm(curve(hi) - np.eye(d)) < 0.5 * budget and hi < 1e6:
            lo, hi = hi, 2 * hi
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if mk.operator_norm(curve(mid) - np.eye(d)) < 0.5 * budget:
                lo = mid
            else:
                hi = mid
        if lo <= 0:
            continue
        H = curve(lo)
        if mk.is_hyperbolic(P @ H, A.tol):
            win = _separating_window(A, p, [as_word(q) for q in protect])
            K = len(win) // 2
            R = A.refine_depth(K)
            newF = H @ R.value(win)
            return pin_values(R, [(win, newF)], delta)
    raise SearchExhausted("no hyperbolizing change within delta", delta=delta)


def random_holder_perturbation(A: LocallyConstantCocycle, radius: float, rng: np.random.Generator,
                               depth: int | None = None, params: HolderParams = HolderParams(),
                               fill: float = 0.9) -> LocallyConstantCocycle:
    """Seeded B = exp(sX) A, X traceless per window, with holder_distance(A, B) < radius.

    The scale s is set from a unit probe to land near fill * radius and is
    halved until the distance is strictly inside.
    """
    if radius <= 0:
        raise ContractViolation("radius must be positive", radius=radius)
    K = A.depth if depth is None else max(depth, A.depth)
    R = A.refine_depth(K)
    d = A.dim
    X = rng.standard_normal((len(R.windows), d, d))
    X -= np.trace(X, axis1=1, axis2=2)[:, None, None] * np.eye(d) / d
    mats = np.asarray(R.mats)

    def build(s):
        E = cv.batch_expm(s * X)
        return R.with_entries({tuple(w): E[n] @ mats[n] for n, w in enumerate(R.windows)})

    probe = holder_distance(R, build(1e-6), params) / 1e-6
    s = fill * radius / probe if probe > 0 else 0.0
    for _ in range(60):
        B = build(s)
        if holder_distance(R, B, params) < radius:
            return B
        s *= 0.5
    raise SearchExhausted("could not place a perturbation inside the radius", radius=radius)


__all__ = [
    "pin_values", "RealizationResult", "heteroclinic_word", "lexicographic_assignment",
    "realize_transitions_fixed", "transition_multisets", "multiset_equal", "BlockRecoding", "block_recode",
    "realize_transitions_periodic", "CoveringCocycle", "make_covering_cocycle", "identity_periodic_cocycle",
    "hyperbolize_period", "random_holder_perturbation",
]
