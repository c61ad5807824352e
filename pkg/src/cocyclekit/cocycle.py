"""Locally constant linear cocycles over subshifts of finite type."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import matkernel as mk
from .errors import (
    ContractViolation,
    FormatError,
    InadmissiblePoint,
    ShapeMismatch,
    Singular,
    WordTooShort,
)
from .symbolic import SFT, SymbolicPoint, Word, as_word, point_through

GROUPS = ("SL", "GL")


@dataclass(frozen=True)
class HolderParams:
    alpha: float = 1.0
    # sup over all pairs by default; a finite eta restricts to d(x, y) < eta
    eta: float = math.inf

    def __post_init__(self):
        if self.alpha <= 0 or self.eta <= 0:
            raise ContractViolation("alpha and eta must be positive")


def _codes(words: np.ndarray, m: int) -> np.ndarray:
    L = words.shape[-1]
    weights = m ** np.arange(L - 1, -1, -1, dtype=np.int64)
    return (words.astype(np.int64) - 1) @ weights


def sliding(seq: np.ndarray, width: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(np.asarray(seq, dtype=np.int64), width)


class LocallyConstantCocycle:
    """Cocycle whose value at x depends on the window x_{-k..k}.

    ``table`` maps each admissible word of length 2k+1 to a d x d matrix.
    Entries are stored once in lexicographic window order with their inverses.
    """

    def __init__(
        self,
        sft: SFT,
        depth: int,
        table: Mapping,
        group: str = "SL",
        tol: mk.ToleranceConfig = mk.DEFAULT_TOL,
    ):
        if group not in GROUPS:
            raise ContractViolation(f"group must be one of {GROUPS}")
        if depth < 0:
            raise ContractViolation("depth must be nonnegative")
        self.sft = sft
        self.depth = int(depth)
        self.group = group
        self.tol = tol
        windows = list(sft.words(2 * depth + 1))
        table = {tuple(key): val for key, val in table.items()}
        missing = [w for w in windows if tuple(w) not in table]
        if missing:
            raise ContractViolation(f"table misses window {missing[0]}", missing=len(missing))
        extra = set(table) - {tuple(w) for w in windows}
        if extra:
            raise ContractViolation(f"table has inadmissible window {sorted(extra)[0]}")
        mats = np.array([np.asarray(table[tuple(w)], dtype=float) for w in windows])
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ShapeMismatch("table entries must be square matrices of one size")
        self.dim = mats.shape[1]
        dets = np.linalg.det(mats)
        if group == "SL":
            bad = np.abs(np.abs(dets) - 1.0) > tol.det_tol * max(1.0, float(np.abs(mats).max())) ** self.dim
            if bad.any():
                raise ContractViolation(
                    f"SL entry at {windows[int(np.argmax(bad))]} has det {dets[bad][0]}"
                )
        conds = np.linalg.cond(mats)
        if not np.all(np.isfinite(conds)) or (conds > 1e13).any():
            raise Singular("degenerate table entry", window=str(windows[int(np.argmax(conds))]))
        self.windows = windows
        self.window_array = np.array(windows, dtype=np.int64).reshape(len(windows), 2 * depth + 1)
        self._codes = _codes(self.window_array, sft.m)
        self.mats = mats
        self.mats.setflags(write=False)
        self.invs = np.linalg.inv(mats)
        self.invs.setflags(write=False)

    # construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, sft: SFT, M, depth: int = 0, group: str = "SL") -> "LocallyConstantCocycle":
        M = np.asarray(M, dtype=float)
        return cls(sft, depth, {tuple(w): M for w in sft.words(2 * depth + 1)}, group)

    @classmethod
    def identity(cls, sft: SFT, d: int, depth: int = 0) -> "LocallyConstantCocycle":
        return cls.constant(sft, np.eye(d), depth)

    @classmethod
    def from_letters(cls, sft: SFT, mats: Mapping[int, np.ndarray], group: str = "SL") -> "LocallyConstantCocycle":
        """Depth-0 cocycle given letter by letter."""
        return cls(sft, 0, {(a,): mats[a] for a in range(1, sft.m + 1)}, group)

    @classmethod
    def from_function(cls, sft: SFT, depth: int, fn, group: str = "SL") -> "LocallyConstantCocycle":
        return cls(sft, depth, {tuple(w): fn(w) for w in sft.words(2 * depth + 1)}, group)

    def with_entries(self, updates: Mapping, group: str | None = None) -> "LocallyConstantCocycle":
        table = self.table()
        for key, val in updates.items():
            key = tuple(key)
            if key not in table:
                raise ContractViolation(f"{key} is not an admissible window of depth {self.depth}")
            table[key] = np.asarray(val, dtype=float)
        return LocallyConstantCocycle(self.sft, self.depth, table, group or self.group, self.tol)

    def table(self) -> dict[tuple, np.ndarray]:
        return {tuple(w): self.mats[i].copy() for i, w in enumerate(self.windows)}

    # lookup ---------------------------------------------------------------
    def index_of(self, windows) -> np.ndarray:
        """Table indices of an array of windows (last axis = window letters)."""
        arr = np.asarray(windows, dtype=np.int64)
        if arr.shape[-1] != 2 * self.depth + 1:
            raise ShapeMismatch("window length does not match depth")
        if arr.size and (arr.min() < 1 or arr.max() > self.sft.m):
            raise InadmissiblePoint("letter outside the alphabet")
        codes = _codes(arr, self.sft.m)
        idx = np.searchsorted(self._codes, codes)
        idx = np.minimum(idx, len(self._codes) - 1)
        if not np.array_equal(self._codes[idx], codes):
            raise InadmissiblePoint("window is not admissible for this subshift")
        return idx

    def value(self, window) -> np.ndarray:
        return self.mats[int(self.index_of(np.asarray(tuple(window))[None])[0])]

    def evaluate(self, x: SymbolicPoint) -> np.ndarray:
        return self.value(x.window(-self.depth, self.depth))

    def factor_indices(self, x: SymbolicPoint, start: int, n: int) -> np.ndarray:
        """Indices of A(sigma^i x) for i = start .. start+n-1."""
        k = self.depth
        seq = np.array(x.window(start - k, start + n - 1 + k), dtype=np.int64)
        return self.index_of(sliding(seq, 2 * k + 1))

    # norms --------------------------------------------------------------
    @cached_property
    def entry_norms(self) -> np.ndarray:
        return mk.batch_norm(self.mats)

    @cached_property
    def inverse_norms(self) -> np.ndarray:
        return mk.batch_norm(self.invs)

    @cached_property
    def norm(self) -> float:
        """sup over windows of the operator norm."""
        return float(self.entry_norms.max())

    @cached_property
    def norm_inv(self) -> float:
        return float(self.inverse_norms.max())

    # products -----------------------------------------------------------
    def product(self, x: SymbolicPoint, n: int) -> np.ndarray:
        """A_n(x); negative n uses the inverses along the backward orbit."""
        d = self.dim
        P = np.eye(d)
        if n > 0:
            for i in self.factor_indices(x, 0, n):
                P = self.mats[i] @ P
        elif n < 0:
            idx = self.factor_indices(x, n, -n)
            # idx[-1] is sigma^{-1} x, idx[0] is sigma^{n} x
            for i in idx[::-1]:
                P = self.invs[i] @ P
        return P

    def products_along(self, x: SymbolicPoint, n: int) -> np.ndarray:
        """Stack of A_0(x), A_1(x), ..., A_n(x)."""
        d = self.dim
        out = np.empty((n + 1, d, d))
        P = np.eye(d)
        out[0] = P
        for j, i in enumerate(self.factor_indices(x, 0, n) if n > 0 else []):
            P = self.mats[i] @ P
            out[j + 1] = P
        return out

    def transition_factors(self, w) -> np.ndarray:
        w = tuple(w)
        n = 2 * self.depth + 1
        if len(w) < n:
            raise WordTooShort(f"transition words need length >= {n}", length=len(w))
        if len(w) == n:
            return np.empty(0, dtype=np.int64)
        return self.index_of(sliding(np.array(w[:-1]), n))

    def transition_product(self, w, start: np.ndarray | None = None) -> np.ndarray:
        """phi(w_{|w|-2k-1}) ... phi(w_1) over the sliding windows of w.

        With ``start`` the factors multiply onto it from the left, which is
        the same floating point sequence as evaluating the merged word.
        """
        P = np.eye(self.dim) if start is None else np.array(start, dtype=float)
        for i in self.transition_factors(w):
            P = self.mats[i] @ P
        return P

    def realization_point(self, w) -> SymbolicPoint:
        """A point p with A_{|w|-2k-1}(p) equal to the transition product of w."""
        return point_through(self.sft, w).shift(self.depth)

    # transformations ---------------------------------------------------------
    def refine_depth(self, k2: int) -> "LocallyConstantCocycle":
        k = self.depth
        if k2 < k:
            raise ContractViolation("refinement cannot lower the depth")
        if k2 == k:
            return self
        table = {}
        for w in self.sft.words(2 * k2 + 1):
            table[tuple(w)] = self.value(w[k2 - k: k2 + k + 1])
        return LocallyConstantCocycle(self.sft, k2, table, self.group, self.tol)

    def renormalize_gl(self) -> "LocallyConstantCocycle":
        scale = np.abs(np.linalg.det(self.mats)) ** (-1.0 / self.dim)
        table = {tuple(w): self.mats[i] * scale[i] for i, w in enumerate(self.windows)}
        return LocallyConstantCocycle(self.sft, self.depth, table, "SL", self.tol)

    def scaled_entries(self, deltas: np.ndarray) -> "LocallyConstantCocycle":
        """Copy with every entry replaced by mats + deltas (same window order)."""
        table = {tuple(w): self.mats[i] + deltas[i] for i, w in enumerate(self.windows)}
        return LocallyConstantCocycle(self.sft, self.depth, table, "GL", self.tol)

    def same_base(self, other: "LocallyConstantCocycle") -> bool:
        return (
            self.sft.m == other.sft.m
            and np.array_equal(self.sft.adjacency, other.sft.adjacency)
            and self.dim == other.dim
        )

    # serialization ------------------------------------------------------
    def to_text(self) -> str:
        lines = [
            "cocycle v1",
            f"alphabet {self.sft.m}",
            f"dim {self.dim}",
            f"depth {self.depth}",
            f"group {self.group}",
            self.sft.to_text(),
        ]
        for i, w in enumerate(self.windows):
            letters = ",".join(str(a) for a in w)
            vals = " ".join(mk.format_float(v) for v in self.mats[i].ravel())
            lines.append(f"entry {letters} {vals}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LocallyConstantCocycle":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0] != "cocycle v1":
            raise FormatError("missing 'cocycle v1' header")
        header = {}
        body = []
        for ln in lines[1:]:
            key = ln.split()[0]
            if key == "entry":
                body.append(ln)
            elif key in ("sft", "full"):
                header["sft"] = SFT.from_text(ln)
            elif key in ("alphabet", "dim", "depth", "group"):
                header[key] = ln.split()[1]
            else:
                raise FormatError(f"unknown line: {ln[:40]!r}")
        try:
            m, d, k, group = int(header["alphabet"]), int(header["dim"]), int(header["depth"]), header["group"]
            sft = header["sft"]
        except KeyError as exc:
            raise FormatError(f"missing header field {exc}") from None
        if sft.m != m:
            raise FormatError("alphabet size disagrees with subshift description")
        table = {}
        for ln in body:
            parts = ln.split()
            if len(parts) != 2 + d * d:
                raise FormatError(f"entry line needs {d * d} values: {ln[:40]!r}")
            key = tuple(int(a) for a in parts[1].split(","))
            if len(key) != 2 * k + 1:
                raise FormatError(f"window {key} has wrong length for depth {k}")
            if key in table:
                raise FormatError(f"duplicate window {key}")
            if not sft.is_admissible(key):
                raise FormatError(f"window {key} is not admissible")
            table[key] = np.array([float(v) for v in parts[2:]]).reshape(d, d)
        return cls(sft, k, table, group)

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(Path(path), self.to_text())

    @classmethod
    def load(cls, path) -> "LocallyConstantCocycle":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise FormatError(f"cannot read {path}: {exc}") from None
        return cls.from_text(text)

    def __repr__(self) -> str:
        return f"LocallyConstantCocycle(m={self.sft.m}, d={self.dim}, depth={self.depth}, group={self.group})"


# distances ------------------------------------------------------------------
def _common(A: LocallyConstantCocycle, B: LocallyConstantCocycle):
    if not A.same_base(B):
        raise ShapeMismatch("cocycles live over different subshifts or dimensions")
    k = max(A.depth, B.depth)
    return A.refine_depth(k), B.refine_depth(k)


def c0_distance(A: LocallyConstantCocycle, B: LocallyConstantCocycle) -> float:
    A2, B2 = _common(A, B)
    return float(mk.batch_norm(A2.mats - B2.mats).max())


def table_seminorm(window_array: np.ndarray, mats: np.ndarray, alpha: float, eta: float = math.inf,
                   chunk_pairs: int = 2_000_000) -> float:
    """Hoelder seminorm of a table indexed by centered windows.

    A pair of windows first differing at |i| = j is at distance 2^-j; only
    separations 2^-j < eta count.
    """
    W, L = window_array.shape
    k = L // 2
    if W < 2:
        return 0.0
    offsets = np.abs(np.arange(L) - k)
    big = L + 1
    rows = max(1, chunk_pairs // W)
    best = 0.0
    flat = mats.reshape(W, -1)
    shape = mats.shape[1:]
    # a pair and its mirror give the same value, so only partners after the row block
    for r0 in range(0, W - 1, rows):
        r1 = min(W, r0 + rows)
        a = window_array[r0:r1]
        b = window_array[r0:]
        j = np.where(a[:, None, :] != b[None, :, :], offsets, big).min(axis=2)
        ok = (j < big) & (2.0 ** (-j.astype(float)) < eta)
        if not ok.any():
            continue
        D = (flat[r0:r1, None, :] - flat[None, r0:, :]).reshape(r1 - r0, W - r0, *shape)
        vals = mk.batch_norm(D) * 2.0 ** (alpha * j)
        best = max(best, float(np.where(ok, vals, 0.0).max()))
    return best


def holder_seminorm(A: LocallyConstantCocycle, p: HolderParams = HolderParams()) -> float:
    return table_seminorm(A.window_array, np.asarray(A.mats), p.alpha, p.eta)


def holder_distance(A: LocallyConstantCocycle, B: LocallyConstantCocycle, p: HolderParams = HolderParams()) -> float:
    A2, B2 = _common(A, B)
    diff = np.asarray(A2.mats) - np.asarray(B2.mats)
    return float(mk.batch_norm(diff).max()) + table_seminorm(A2.window_array, diff, p.alpha, p.eta)


# quasi-conformality diagnostics ------------------------------------------------
class Membership(enum.Enum):
    VIOLATED = "violated"
    HOLDS_UP_TO_HORIZON = "holds_up_to_horizon"


@dataclass
class QcTrace:
    point: SymbolicPoint
    horizon: int
    n: np.ndarray
    norm: np.ndarray
    norm_inv: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.norm * self.norm_inv


def qc_trace(A: LocallyConstantCocycle, x: SymbolicPoint, N: int) -> QcTrace:
    fwd = A.products_along(x, N)
    # backward products A_{-j}(x) built by the same left-multiplication rule
    bwd = [np.eye(A.dim)]
    if N:
        idx = A.factor_indices(x, -N, N)
        P = np.eye(A.dim)
        for i in idx[::-1]:
            P = A.invs[i] @ P
            bwd.append(P)
    mats = list(reversed(bwd[1:])) + list(fwd)
    mats = np.array(mats)
    norms = mk.batch_norm(mats)
    inv_norms = mk.batch_norm(np.linalg.inv(mats))
    return QcTrace(x, N, np.arange(-N, N + 1), norms, inv_norms)


@dataclass
class MembershipResult:
    status: Membership
    first_violation: int | None
    horizon: int


def _membership(values: np.ndarray, ns: np.ndarray, kappa: float, N: int) -> MembershipResult:
    bad = np.flatnonzero(values > kappa * (1 + 1e-12))
    if bad.size:
        return MembershipResult(Membership.VIOLATED, int(ns[bad[0]]), N)
    return MembershipResult(Membership.HOLDS_UP_TO_HORIZON, None, N)


def membership_qc(A, x, kappa: float, N: int) -> MembershipResult:
    """Forward quasi-conformality up to the horizon: ratio at n = 0..N at most kappa."""
    tr = qc_trace(A, x, N)
    fwd = tr.n >= 0
    return _membership(tr.ratio[fwd], tr.n[fwd], kappa, N)


def membership_bounded(A, x, kappa: float, N: int) -> MembershipResult:
    """Forward boundedness: max(|A_n|, |A_n^-1|) at n = 0..N at most kappa."""
    tr = qc_trace(A, x, N)
    fwd = tr.n >= 0
    return _membership(np.maximum(tr.norm, tr.norm_inv)[fwd], tr.n[fwd], kappa, N)


# inequalities used as property checks -------------------------------------------
def finite_close_bound(A: LocallyConstantCocycle, B: LocallyConstantCocycle, k: int) -> float:
    """k max(|A|, |B|)^(k-1) d_C0(A, B)."""
    return k * max(A.norm, B.norm) ** (k - 1) * c0_distance(A, B)


def unstable_difference_bound(alpha: float, K: float, normB: float, L: int, seminorm: float) -> float:
    """(1 - 2^-alpha)^-1 K^3 max(|B|, 1)^(L-1) |B|_alpha."""
    return K ** 3 * max(normB, 1.0) ** (L - 1) * seminorm / (1.0 - 2.0 ** (-alpha))


def checkpoint_constant(B: LocallyConstantCocycle, points: Iterable[SymbolicPoint], times: Iterable[int]) -> float:
    """max of |B_n^{+-1}| over the given checkpoint times at the given points."""
    K = 1.0
    times = list(times)
    for x in points:
        prods = B.products_along(x, max(times))
        for n in times:
            K = max(K, mk.operator_norm(prods[n]), mk.operator_norm(np.linalg.inv(prods[n])))
    return K


def random_cocycle(rng: np.random.Generator, sft: SFT, d: int, depth: int, scale: float = 0.5,
                   group: str = "SL") -> LocallyConstantCocycle:
    table = {}
    for w in sft.words(2 * depth + 1):
        M = mk.random_sl(rng, d, scale)
        if group == "GL":
            M = M * float(np.exp(rng.normal(scale=0.3)))
        table[tuple(w)] = M
    return LocallyConstantCocycle(sft, depth, table, group)


__all__ = [
    "HolderParams", "LocallyConstantCocycle", "c0_distance", "holder_seminorm", "holder_distance",
    "table_seminorm", "Membership", "QcTrace", "qc_trace", "membership_qc", "membership_bounded",
    "finite_close_bound", "unstable_difference_bound", "checkpoint_constant", "random_cocycle",
    "Word", "as_word",
]
