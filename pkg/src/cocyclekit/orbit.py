"""Bounded orbits built from covering certificates, a brute-force oracle and
the unboundedness attack.

Time conventions: an orbit word ``W`` starts with the first marked word and
``W[k]`` sits at position 0 of the representative point, so the window used
by the cocycle at time t is ``W[t .. t+2k]``.  Checkpoint j is the time n_j at
which the j-th marked word occupies ``W[n_j .. n_j+2k]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matkernel as mk
from .cocycle import LocallyConstantCocycle
from .covering import CocycleCoveringCertificate, Region, region_shrink
from .errors import (
    ContractViolation,
    DegenerateBudget,
    EnumerationBudget,
    NoRecurrence,
    NoTransitionApplies,
    SeparationFailed,
)
from .symbolic import SFT, SymbolicPoint, Word, _greedy_walk, periodic_point


# ---------------------------------------------------------------------------
# perturbation budget


@dataclass
class EpsilonBudget:
    epsilon: float
    constant: float
    prior: float
    delta: float
    transition_length: int
    depth: int
    dim: int
    region_bound: float
    norm: float
    alpha: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def budget_constant(L: int, k: int, d: int, K_U: float, normA: float, alpha: float, eps0: float) -> float:
    a = normA + eps0
    finite = (L + k) * a ** (L + k - 1)
    tail = K_U * a ** (k * d) / (1.0 - 2.0 ** (-alpha)) * a ** (L - 1) * K_U**3
    return finite + tail


def epsilon_budget(cert: CocycleCoveringCertificate, A: LocallyConstantCocycle, alpha: float = 1.0,
                   prior: float | None = None) -> EpsilonBudget:
    """Largest Holder distance for which orbit plans built from ``cert`` stay in U.

    The constant depends on the perturbation through ||A|| + eps0; it is first
    evaluated at the conservative prior (default: the certified delta) and
    then once more at the resulting epsilon, which can only lower it.
    """
    if not 0 < alpha <= 1:
        raise ContractViolation("alpha must lie in (0, 1]")
    delta = cert.delta
    L, k, d = cert.max_transition_length, A.depth, A.dim
    K_U = cert.region.norm_bound()
    eps0 = delta if prior is None else float(prior)
    C = budget_constant(L, k, d, K_U, A.norm, alpha, eps0)
    eps = min(eps0, delta / C)
    C = budget_constant(L, k, d, K_U, A.norm, alpha, eps)
    eps = min(eps, delta / C)
    if not (math.isfinite(eps) and eps > 0):
        raise DegenerateBudget("budget is not a positive number", delta=delta, constant=C)
    return EpsilonBudget(eps, C, eps0, delta, L, k, d, K_U, A.norm, alpha)


# ---------------------------------------------------------------------------
# orbit plans


def _tail(sft: SFT, w: tuple, forward: bool) -> tuple[tuple, tuple]:
    """(steps, period) continuing w on one side: its own period when cyclic."""
    if sft.is_cyclic(w):
        return (), tuple(w)
    steps, cyc = _greedy_walk(sft, w[-1] if forward else w[0], forward)
    if forward:
        return tuple(steps), tuple(cyc)
    return tuple(reversed(steps)), tuple(reversed(cyc))


def representative_point(sft: SFT, word, first, last, k: int) -> SymbolicPoint:
    """The orbit word with the periods of its first and last marked words as tails."""
    lsteps, lper = _tail(sft, tuple(first), False)
    rsteps, rper = _tail(sft, tuple(last), True)
    core = lsteps + tuple(word) + rsteps
    return SymbolicPoint(Word(lper), Word(core), Word(rper), len(lsteps) + k)


@dataclass
class OrbitPlan:
    marked: list[tuple]
    transitions: list[tuple]
    times: list[int]
    word: tuple
    depth: int
    checkpoints: np.ndarray
    checkpoint_depths: np.ndarray
    region: Region
    sft: SFT
    worst_context_depth: float | None = None
    log: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.times[-1]

    def point(self, j: int | None = None) -> SymbolicPoint:
        """Representative used at checkpoint j (the final one by default)."""
        j = len(self.times) - 1 if j is None else j
        n = 2 * self.depth + 1
        W = self.word[: self.times[j] + n]
        return representative_point(self.sft, W, self.marked[0], self.marked[j], self.depth)

    def as_dict(self) -> dict:
        return {
            "marked": [list(a) for a in self.marked],
            "transitions": [list(w) for w in self.transitions],
            "times": list(self.times),
            "word": list(self.word),
            "depth": self.depth,
            "checkpoints": [mk.matrix_to_list(P) for P in self.checkpoints],
            "checkpoint_depths": self.checkpoint_depths.tolist(),
            "worst_context_depth": self.worst_context_depth,
        }


def _extend(W: tuple, w: tuple, n: int) -> tuple:
    if tuple(W[-n:]) != tuple(w[:n]):
        raise ContractViolation("transition does not start with the current marked word")
    return tuple(W) + tuple(w[n:])


def build_bounded_orbit(cert: CocycleCoveringCertificate, A: LocallyConstantCocycle,
                        B: LocallyConstantCocycle, J: int, start=None,
                        context_limit: int = 4096) -> OrbitPlan:
    """Greedy orbit with B_{n_j}(x_j) in U for j = 0..J.

    At step j the first w in Lambda_{a_j} with A_[w> P_j in U_(delta) is
    taken; P_{j+1} is then the exact product of B at the new representative.
    """
    if not A.same_base(B):
        raise ContractViolation("A and B live on different bases")
    k, kB = A.depth, B.depth
    n = 2 * k + 1
    U = cert.region
    inner = region_shrink(U, cert.delta)
    a0 = tuple(start) if start is not None else tuple(cert.marked_words[0])
    if a0 not in cert.lam:
        raise ContractViolation(f"{a0} is not a marked word")
    d = A.dim
    W = a0
    marked, trans, times = [a0], [], [0]
    P = np.eye(d)
    if not U.contains(P):
        raise ContractViolation("the identity must lie in U to start an orbit")
    checkpoints = [P]
    stable_t, S = 0, np.eye(d)
    for j in range(J):
        a = marked[-1]
        chosen = None
        for w in cert.lam[a]:
            if inner.contains(A.transition_product(w, start=P)):
                chosen = tuple(w)
                break
        if chosen is None:
            raise NoTransitionApplies("no transition maps the checkpoint into the shrunken region",
                                      step=j, marked=list(a), depth=float(U.depth_many(P[None])[0]))
        W = _extend(W, chosen, n)
        b = chosen[-n:]
        t_new = len(W) - n
        x = representative_point(B.sft, W, a0, b, k)
        # factors at times < len(W) - k - kB never see the right tail
        t_s = max(stable_t, min(t_new, len(W) - k - kB))
        if t_s > stable_t:
            for i in B.factor_indices(x, stable_t, t_s - stable_t):
                S = B.mats[i] @ S
            stable_t = t_s
        P = S.copy()
        if t_new > stable_t:
            for i in B.factor_indices(x, stable_t, t_new - stable_t):
                P = B.mats[i] @ P
        marked.append(b)
        trans.append(chosen)
        times.append(t_new)
        checkpoints.append(P)
    cps = np.array(checkpoints)
    plan = OrbitPlan(marked, trans, times, W, k, cps, U.depth_many(cps), U, B.sft)
    plan.worst_context_depth = worst_context_depth(plan, B, context_limit)
    return plan


def worst_context_depth(plan: OrbitPlan, B: LocallyConstantCocycle, limit: int = 4096) -> float | None:
    """min over checkpoints and admissible right contexts of depth_U(B_{n_j}).

    Only letters beyond the cylinder of W_j can change B_{n_j}; there are
    max(0, kB - k - 1) of them.  Returns None when m^extra exceeds ``limit``.
    """
    k, kB = plan.depth, B.depth
    extra = max(0, kB - k - 1)
    m = B.sft.m
    if m**extra > limit:
        return None
    if extra == 0:
        return float(plan.checkpoint_depths.min())
    n = 2 * k + 1
    worst = math.inf
    full = plan.point()
    prods = B.products_along(full, plan.steps)
    for j, t in enumerate(plan.times):
        Wj = plan.word[: t + n]
        stable = max(0, len(Wj) - k - kB)
        base = prods[stable]
        for ctx in B.sft.words(extra + 1):
            if ctx[0] != Wj[-1]:
                continue
            core = tuple(Wj) + tuple(ctx[1:])
            x = representative_point(B.sft, core, plan.marked[0], core[-n:], k)
            P = base
            for i in B.factor_indices(x, stable, t - stable) if t > stable else []:
                P = B.mats[i] @ P
            worst = min(worst, float(plan.region.depth_many(P[None])[0]))
    return worst


@dataclass
class PlanCheck:
    ok: bool
    min_depth_step: float
    min_depth_final: float
    mismatch: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def verify_orbit_plan(plan: OrbitPlan, B: LocallyConstantCocycle) -> PlanCheck:
    """Recompute every checkpoint from scratch.

    Products along the final representative are recomputed in one pass; the
    per-step representatives reuse that prefix up to the tail-independent
    time and redo the rest.
    """
    k, kB = plan.depth, B.depth
    n = 2 * k + 1
    x = plan.point()
    prods = B.products_along(x, plan.steps)
    U = plan.region
    final = U.depth_many(prods[plan.times])
    step_depths, mismatch = [], 0.0
    for j, t in enumerate(plan.times):
        xj = plan.point(j)
        stable = min(t, max(0, t + n - k - kB))
        P = prods[stable]
        if t > stable:
            for i in B.factor_indices(xj, stable, t - stable):
                P = B.mats[i] @ P
        step_depths.append(float(U.depth_many(P[None])[0]))
        mismatch = max(mismatch, float(np.abs(P - plan.checkpoints[j]).max()))
    step_depths = np.array(step_depths)
    ok = bool((step_depths >= 0).all() and (final >= 0).all() and mismatch <= 1e-9)
    return PlanCheck(ok, float(step_depths.min()), float(final.min()), mismatch)


# ---------------------------------------------------------------------------
# two-sided bounds


@dataclass
class BoundReport:
    K: float
    C_prime: float
    region_bound: float
    horizon: int
    forward_max: float
    forward_ok: bool
    period_word: tuple
    period_start: int
    period_max: float
    period_ok: bool

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["period_word"] = list(self.period_word)
        return out


def _two_sided(P: np.ndarray) -> np.ndarray:
    return np.maximum(mk.batch_norm(P), mk.batch_norm(np.linalg.inv(P)))


def two_sided_bound(plan: OrbitPlan, B: LocallyConstantCocycle, L: int) -> BoundReport:
    """K = C' K_U with C' = max(||B||, ||B^-1||)^L, checked on the plan.

    Forward: max(||B_n||, ||B_n^-1||) <= K for n <= n_J on the final
    representative.  Periodic: between the first repeat of a marked word the
    word closes up into a periodic point, on which the same quantity is at
    most K^2 over one full period.
    """
    K_U = plan.region.norm_bound()
    Cp = max(B.norm, B.norm_inv) ** L
    K = Cp * K_U
    x = plan.point()
    vals = _two_sided(B.products_along(x, plan.steps))
    fwd = float(vals.max())
    seen: dict[tuple, int] = {}
    rep = None
    for j, a in enumerate(plan.marked):
        if a in seen:
            rep = (seen[a], j)
            break
        seen[a] = j
    if rep is None:
        raise NoRecurrence("no marked word repeats along the plan", checkpoints=len(plan.marked))
    t1, t2 = plan.times[rep[0]], plan.times[rep[1]]
    q = tuple(plan.word[t1:t2])
    p = periodic_point(q).shift(plan.depth)
    pv = _two_sided(B.products_along(p, len(q)))
    pmax = float(pv.max())
    tol = 1 + 1e-12
    return BoundReport(K, Cp, K_U, plan.steps, fwd, fwd <= K * tol, q, t1, pmax, pmax <= K * K * tol)


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_min_max_norm(B: LocallyConstantCocycle, N: int, max_nodes: int = 20_000_000):
    """Exact min over words of max_{n<=N} max(||B_n||, ||B_n^-1||).

    A word fixes the letters seen by B_1..B_N: length N + 2k.  Depth-first in
    lexicographic order with branch and bound; the prefix maximum never
    decreases along an extension, so a branch whose maximum already reaches
    the incumbent cannot produce a strictly better word.  Ties keep the
    lexicographically first word.
    """
    sft = B.sft
    k = B.depth
    n_letters = N + 2 * k
    d = B.dim
    best = [math.inf, None]
    nodes = [0]
    norms = np.maximum(B.entry_norms, B.inverse_norms)
    word: list[int] = []

    def rec(P, Pi, cur):
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise EnumerationBudget("oracle exceeded its node budget", nodes=max_nodes)
        if len(word) == n_letters:
            if cur < best[0]:
                best[0], best[1] = cur, tuple(word)
            return
        for c in range(1, sft.m + 1):
            if word and not sft.allowed(word[-1], c):
                continue
            word.append(c)
            if len(word) >= 2 * k + 1:
                i = int(B.index_of(np.array(word[-(2 * k + 1):])[None])[0])
                P2 = B.mats[i] @ P
                Pi2 = Pi @ B.invs[i]
                val = max(cur, mk.operator_norm(P2), mk.operator_norm(Pi2))
                if val < best[0]:
                    rec(P2, Pi2, val)
            else:
                rec(P, Pi, cur)
            word.pop()

    if n_letters == 0:
        return (), 1.0
    del norms
    rec(np.eye(d), np.eye(d), 1.0)
    return best[1], float(best[0])


# ---------------------------------------------------------------------------
# unboundedness attack


def separating_depth(x0: SymbolicPoint, n: int, start: int = 0, max_depth: int = 12) -> int:
    """Smallest K >= start with the windows of x0 at times 0..n-1 pairwise distinct."""
    for K in range(start, max_depth + 1):
        wins = {x0.window(i - K, i + K) for i in range(n)}
        if len(wins) == n:
            return K
    raise SeparationFailed("orbit segment is not separated by windows up to max_depth",
                           n=n, max_depth=max_depth)


def stretch(d: int, r: float) -> np.ndarray:
    """diag(r, r^{-1/(d-1)}, ..., r^{-1/(d-1)})."""
    return np.diag([r] + [r ** (-1.0 / (d - 1))] * (d - 1))


@dataclass
class AttackResult:
    cocycle: LocallyConstantCocycle
    depth: int
    measured: float
    bound: float
    kappa_bound: float
    multiplicative_size: float
    stretch_size: float
    c0_size: float
    c0_bound: float
    rows: list

    @property
    def ratio(self) -> float:
        return self.measured / self.bound

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k not in ("cocycle", "rows")} | {"ratio": self.ratio}


def unbounded_attack(B: LocallyConstantCocycle, x0: SymbolicPoint, r: float, n: int, v0=None,
                     max_depth: int = 12) -> AttackResult:
    """Perturb B along n orbit points so that ||B^_n(x0)|| >= r^n / ||B_n(x0)^-1||.

    With v_i = B_i(x0) B_n(x0)^-1 v0 the entry at sigma^i x0 becomes
    R D_r R^-1 B(sigma^i x0) where R is a rotation sending e_1 to v_{i+1},
    the image of v_i under B.  Each step then stretches the tracked vector
    by exactly r.
    """
    d = B.dim
    if d < 2:
        raise ContractViolation("the attack needs d >= 2")
    if r < 1:
        raise ContractViolation("the stretch factor must be at least 1")
    K = separating_depth(x0, n, B.depth, max_depth)
    Bk = B.refine_depth(K)
    prods = Bk.products_along(x0, n)
    Bn_inv = np.linalg.inv(prods[n])
    v0 = np.eye(d)[0] if v0 is None else np.asarray(v0, dtype=float)
    v = [prods[i] @ Bn_inv @ v0 for i in range(n + 1)]
    Dr = stretch(d, r)
    updates, mult = {}, 0.0
    for i in range(n):
        win = x0.window(i - K, i + K)
        R = mk.rotation_to(v[i + 1])
        E = R @ Dr @ R.T
        updates[win] = E @ Bk.value(win)
        mult = max(mult, mk.operator_norm(E - np.eye(d)))
    Bh = Bk.with_entries(updates)
    hat = Bh.products_along(x0, n)
    measured = mk.operator_norm(hat[n])
    bound = r**n / mk.operator_norm(Bn_inv)
    kappa0 = float(mk.batch_norm(prods).max())
    rows = []
    for i in range(n + 1):
        lower = r**i * np.linalg.norm(v[i]) / np.linalg.norm(v[0])
        rows.append((i, mk.operator_norm(prods[i]), mk.operator_norm(hat[i]), lower))
    diff = float(mk.batch_norm(Bh.mats - Bk.mats).max())
    size = mk.operator_norm(Dr - np.eye(d))
    return AttackResult(Bh, K, measured, bound, r**n * kappa0 ** (-(d - 1)), mult, size, diff,
                        size * Bk.norm, rows)


__all__ = [
    "EpsilonBudget", "budget_constant", "epsilon_budget", "OrbitPlan", "representative_point",
    "build_bounded_orbit", "worst_context_depth", "PlanCheck", "verify_orbit_plan", "BoundReport",
    "two_sided_bound", "brute_force_min_max_norm", "separating_depth", "stretch", "AttackResult",
    "unbounded_attack",
]
