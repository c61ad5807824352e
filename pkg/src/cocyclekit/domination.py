"""Dominated splitting proxies, periodic spectra and the hyperbolicity census.

Domination is detected with the finite-time singular-value gap: index i is
m-dominated when sigma_{i+1}/sigma_i <= 1/2 for every length-m product.  This
is an external criterion (the invariant bundles are never computed) and
reports say so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matkernel as mk
from .cocycle import LocallyConstantCocycle
from .errors import ContractViolation, EnumerationBudget
from .symbolic import SFT, Word, periodic_point, primitive_cyclic_words

CRITERION = "external criterion: finite-time singular value gap sigma_{i+1}/sigma_i <= 1/2"


# ---------------------------------------------------------------------------
# domination


def _word_products(A: LocallyConstantCocycle, m: int, max_words: int):
    """All admissible words of length m + 2k with their length-m products."""
    k = A.depth
    n = 2 * k + 1
    H = A.sft.adjacency.astype(bool)
    words = np.arange(1, A.sft.m + 1, dtype=np.int64)[:, None]
    P = np.broadcast_to(np.eye(A.dim), (len(words), A.dim, A.dim)).copy()
    if n == 1:
        P = A.mats[A.index_of(words)] @ P
    for length in range(2, m + 2 * k + 1):
        ext_l, ext_c = np.nonzero(H[words[:, -1] - 1])
        if len(ext_l) > max_words:
            raise EnumerationBudget("too many words for the domination test", words=len(ext_l), cap=max_words)
        words = np.hstack([words[ext_l], (ext_c + 1)[:, None]])
        P = P[ext_l]
        if length >= n:
            P = A.mats[A.index_of(words[:, -n:])] @ P
    return words, P


def m_domination_test(A: LocallyConstantCocycle, i: int, m: int, max_words: int = 2_000_000):
    """(passes, worst ratio) of sigma_{i+1}/sigma_i over all length-m products."""
    d = A.dim
    if not 1 <= i < d:
        raise ContractViolation("index must satisfy 1 <= i < d", i=i, d=d)
    if m < 1:
        raise ContractViolation("m must be positive")
    _, P = _word_products(A, m, max_words)
    s = np.linalg.svd(P, compute_uv=False)
    worst = float((s[:, i] / s[:, i - 1]).max())
    return worst <= 0.5, worst


@dataclass
class DominationReport:
    index: int
    m_found: int | None
    worst_ratio: dict
    m_max: int
    criterion: str = CRITERION

    def summary(self) -> str:
        if self.m_found is None:
            return f"index {self.index}: no gap up to m_max={self.m_max} ({self.criterion})"
        return f"index {self.index}: {self.m_found}-dominated ({self.criterion})"

    def as_dict(self) -> dict:
        return {"index": self.index, "m_found": self.m_found, "m_max": self.m_max, "criterion": self.criterion,
                "worst_ratio": {str(m): r for m, r in self.worst_ratio.items()}}


def domination_scan(A: LocallyConstantCocycle, i: int, m_max: int, max_words: int = 2_000_000) -> DominationReport:
    ratios = {}
    found = None
    for m in range(1, m_max + 1):
        ok, r = m_domination_test(A, i, m, max_words)
        ratios[m] = r
        if ok:
            found = m
            break
    return DominationReport(i, found, ratios, m_max)


def transpose_reversed(A: LocallyConstantCocycle) -> LocallyConstantCocycle:
    """Cocycle over the reversed subshift with entries A(reversed window)^T.

    Its length-m products are the transposes of those of A along reversed
    words, so singular value gaps agree index by index.
    """
    sft = SFT(A.sft.m, A.sft.adjacency.T.copy())
    table = {tuple(reversed(w)): A.mats[i].T.copy() for i, w in enumerate(A.windows)}
    return LocallyConstantCocycle(sft, A.depth, table, A.group, A.tol)


# ---------------------------------------------------------------------------
# periodic spectra


@dataclass
class SpectrumEntry:
    word: Word
    eigenvalues: np.ndarray
    moduli: np.ndarray
    hyperbolic: bool
    elliptic: list[bool]
    witness: float

    def row(self) -> list:
        return (["".join(map(str, self.word))] + [float(x) for x in self.moduli]
                + [int(self.hyperbolic)] + [int(e) for e in self.elliptic] + [self.witness])


@dataclass
class SpectrumReport:
    entries: list[SpectrumEntry]
    max_len: int
    tol: float
    log: list = field(default_factory=list)

    @property
    def all_hyperbolic(self) -> bool:
        return all(e.hyperbolic for e in self.entries)

    def count(self, flag) -> int:
        return sum(1 for e in self.entries if flag(e))

    def header(self, d: int) -> list[str]:
        return (["word"] + [f"mod{j + 1}" for j in range(d)] + ["hyperbolic"]
                + [f"elliptic{i}" for i in range(1, d)] + ["h_w"])


def sorted_spectrum(M) -> np.ndarray:
    lam = mk.eigenvalues(M)
    order = np.lexsort((lam.imag, np.abs(lam)))
    return lam[order]


def elliptic_flags(lam: np.ndarray, tol: float) -> list[bool]:
    """i-ellipticity for i = 1..d-1, eigenvalues in increasing modulus.

    lambda_i, lambda_{i+1} must be a non-real conjugate pair with strict
    modulus gaps to the neighbouring eigenvalues.
    """
    d = len(lam)
    logs = np.log(np.maximum(np.abs(lam), 1e-300))
    out = []
    for i in range(1, d):
        a, b = lam[i - 1], lam[i]
        scale = max(1.0, abs(a))
        ok = abs(a.imag) > tol * scale and abs(a - np.conj(b)) <= tol * scale
        if ok and i > 1:
            ok = logs[i - 2] < logs[i - 1] - tol
        if ok and i < d - 1:
            ok = logs[i] < logs[i + 1] - tol
        out.append(bool(ok))
    return out


def _pair_witness(lam: np.ndarray) -> float:
    return float(np.real(np.prod(np.outer(lam, lam) - 1.0)))


def periodic_spectrum_scan(A: LocallyConstantCocycle, max_len: int, tol: float | None = None,
                           max_words: int = 200_000) -> SpectrumReport:
    """Classify the period product of every primitive cyclic word up to max_len."""
    tol = A.tol.spectral_tol if tol is None else tol
    words = primitive_cyclic_words(A.sft, max_len)
    if len(words) > max_words:
        raise EnumerationBudget("too many periodic words", words=len(words), cap=max_words)
    entries, log = [], []
    for w in words:
        M = A.product(periodic_point(w), len(w))
        lam = sorted_spectrum(M)
        mods = np.abs(lam)
        hyp = bool(np.all(np.abs(mods - 1.0) > tol))
        h = _pair_witness(lam)
        if hyp and abs(h) <= tol:
            log.append({"word": list(w), "note": "hyperbolic with vanishing pair witness"})
        entries.append(SpectrumEntry(w, lam, mods, hyp, elliptic_flags(lam, tol), h))
    return SpectrumReport(entries, max_len, tol, log)


# ---------------------------------------------------------------------------
# census


def renormalize_sign(M: np.ndarray) -> np.ndarray:
    """Unimodular renormalization after flipping the first row if det < 0."""
    M = np.array(M, dtype=float)
    if np.linalg.det(M) < 0:
        M[0] = -M[0]
    return mk.unimodular_renormalize(M)


def gaussian_tuple_sampler(d: int, m: int):
    def sample(rng: np.random.Generator) -> list[np.ndarray]:
        return [renormalize_sign(rng.normal(size=(d, d))) for _ in range(m)]
    return sample


def _all_words(m: int, max_len: int):
    for n in range(1, max_len + 1):
        for idx in np.ndindex(*(m,) * n):
            yield idx


@dataclass
class CensusReport:
    tuples: int
    dim: int
    max_len: int
    witness_fraction: float
    spectral_fraction: float
    failures: list

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def tuple_is_generic(mats, max_len: int, tol: float) -> tuple[bool, bool]:
    """(every word has all |lambda_i lambda_j - 1| > tol, every word hyperbolic)."""
    wit, spec = True, True
    for w in _all_words(len(mats), max_len):
        P = np.eye(mats[0].shape[0])
        for i in w:
            P = mats[i] @ P
        lam = mk.eigenvalues(P)
        if np.abs(np.outer(lam, lam) - 1.0).min() <= tol:
            wit = False
        if np.abs(np.abs(lam) - 1.0).min() <= tol:
            spec = False
        if not (wit or spec):
            break
    return wit, spec


def hyperbolicity_census(sampler, tuples: int, max_len: int, d: int, seed: int = 0,
                         tol: float = 1e-9) -> CensusReport:
    """Fraction of sampled tuples whose words up to max_len are all hyperbolic.

    ``witness_fraction`` uses the pair product h_w (every factor
    lambda_i lambda_j - 1 bounded away from 0), which certifies hyperbolicity;
    ``spectral_fraction`` checks eigenvalue moduli directly.  For d = 2 the
    witness vanishes identically because lambda_1 lambda_2 = det = 1.
    """
    rng = np.random.default_rng(seed)
    nw = ns = 0
    fails = []
    for t in range(tuples):
        mats = sampler(rng)
        if any(M.shape != (d, d) for M in mats):
            raise ContractViolation("sampler returned matrices of the wrong size")
        w, s = tuple_is_generic(mats, max_len, tol)
        nw += w
        ns += s
        if not w and len(fails) < 20:
            fails.append(t)
    return CensusReport(tuples, d, max_len, nw / tuples, ns / tuples, fails)


# ---------------------------------------------------------------------------
# examples


def example_fig2(H1, H2) -> LocallyConstantCocycle:
    """Depth-1 cocycle on the full 2-shift whose 3-step products lie in <H1, H2>^+."""
    H1, H2 = np.asarray(H1, dtype=float), np.asarray(H2, dtype=float)
    table = {
        (1, 1, 1): H1, (2, 2, 2): H1, (1, 2, 1): H1,
        (2, 2, 1): H2,
        (2, 1, 1): np.linalg.inv(H1),
        (1, 2, 2): np.linalg.inv(H2),
        (1, 1, 2): H1 @ H1,
        (2, 1, 2): H2 @ H2,
    }
    return LocallyConstantCocycle(SFT.full(2), 1, table)


def example_fig3(X, Y, W, Z) -> LocallyConstantCocycle:
    """Depth-1 cocycle on the full 2-shift realizing words in X^{+-1}, Y^{+-1}."""
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    d = X.shape[0]
    table = {
        (1, 1, 1): np.linalg.inv(X),
        (1, 1, 2): X, (1, 2, 2): X,
        (2, 2, 2): np.linalg.inv(Y),
        (2, 2, 1): Y @ Y,
        (2, 1, 1): np.eye(d),
        (1, 2, 1): np.asarray(W, dtype=float),
        (2, 1, 2): np.asarray(Z, dtype=float),
    }
    return LocallyConstantCocycle(SFT.full(2), 1, table)


FIG2_SYMBOLS = {
    (1, 1, 1): ((1, 1),), (2, 2, 2): ((1, 1),), (1, 2, 1): ((1, 1),),
    (2, 2, 1): ((2, 1),),
    (2, 1, 1): ((1, -1),),
    (1, 2, 2): ((2, -1),),
    (1, 1, 2): ((1, 1), (1, 1)),
    (2, 1, 2): ((2, 1), (2, 1)),
}


def free_reduce(letters) -> tuple:
    """Free reduction of a word in generators with exponents +-1."""
    out: list[tuple[int, int]] = []
    for g, e in letters:
        if out and out[-1][0] == g and out[-1][1] == -e:
            out.pop()
        else:
            out.append((g, e))
    return tuple(out)


def fig2_three_step_words() -> dict:
    """Reduced symbolic A_3 for every window of length 5 (applied order)."""
    from itertools import product

    out = {}
    for w in product((1, 2), repeat=5):
        seq = []
        for t in range(3):
            seq.extend(FIG2_SYMBOLS[w[t:t + 3]])
        out[w] = free_reduce(seq)
    return out


__all__ = [
    "CRITERION", "m_domination_test", "DominationReport", "domination_scan", "transpose_reversed",
    "SpectrumEntry", "SpectrumReport", "sorted_spectrum", "elliptic_flags", "periodic_spectrum_scan",
    "renormalize_sign", "gaussian_tuple_sampler", "CensusReport", "tuple_is_generic",
    "hyperbolicity_census", "example_fig2", "example_fig3", "FIG2_SYMBOLS", "free_reduce",
    "fig2_three_step_words",
]
