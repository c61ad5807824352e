"""Subshifts of finite type, words, eventually periodic points and transitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import networkx as nx
import numpy as np

from .errors import ContractViolation, OverlapMismatch


class Word(tuple):
    """Finite nonempty word over the alphabet {1, ..., m}."""

    def __new__(cls, letters: Sequence[int] = ()):
        letters = tuple(int(a) for a in letters)
        if not letters:
            raise ContractViolation("words must have length at least 1")
        return super().__new__(cls, letters)

    def __add__(self, other):
        return Word(tuple(self) + tuple(other))

    def __getitem__(self, item):
        out = tuple.__getitem__(self, item)
        if isinstance(item, slice):
            return Word(out) if out else out
        return out

    def __repr__(self) -> str:
        return "Word(" + "".join(str(a) if a < 10 else f"[{a}]" for a in self) + ")"


def as_word(w) -> Word:
    return w if isinstance(w, Word) else Word(w)


def concat(w, v) -> Word:
    return Word(tuple(w) + tuple(v))


def merge(w, v, t: int) -> Word:
    """Glue ``v`` onto ``w`` along an overlap of ``t`` letters.

    With ``t = 0`` this is concatenation.  Raises OverlapMismatch when the last
    ``t`` letters of ``w`` differ from the first ``t`` letters of ``v``.
    """
    w, v = tuple(w), tuple(v)
    if t < 0 or t > len(w) or t > len(v):
        raise OverlapMismatch(f"overlap {t} exceeds word lengths {len(w)}, {len(v)}")
    if t and w[len(w) - t:] != v[:t]:
        raise OverlapMismatch(f"suffix {w[len(w) - t:]} != prefix {v[:t]}")
    return Word(w + v[t:])


@dataclass(frozen=True)
class SFT:
    """Two-sided subshift of finite type on letters 1..m given by a 0/1 matrix."""

    m: int
    adjacency: np.ndarray = field(compare=False)

    def __post_init__(self):
        H = np.asarray(self.adjacency, dtype=np.int64)
        if H.shape != (self.m, self.m) or not np.isin(H, (0, 1)).all():
            raise ContractViolation("adjacency must be an m x m 0/1 matrix")
        if (H.sum(axis=1) == 0).any() or (H.sum(axis=0) == 0).any():
            # every letter needs a successor and a predecessor, otherwise
            # admissible words need not extend to points
            raise ContractViolation("adjacency has a letter without successor or predecessor")
        H.setflags(write=False)
        object.__setattr__(self, "adjacency", H)

    @classmethod
    def full(cls, m: int) -> "SFT":
        return cls(m, np.ones((m, m), dtype=np.int64))

    @property
    def is_full(self) -> bool:
        return bool(self.adjacency.all())

    def allowed(self, a: int, b: int) -> bool:
        return bool(self.adjacency[a - 1, b - 1])

    def is_admissible(self, w) -> bool:
        w = tuple(w)
        if not w or min(w) < 1 or max(w) > self.m:
            return False
        return all(self.adjacency[a - 1, b - 1] for a, b in zip(w, w[1:]))

    def is_cyclic(self, w) -> bool:
        """True when ``w`` repeated forever is admissible."""
        return self.is_admissible(w) and self.allowed(w[-1], w[0])

    def words(self, n: int) -> Iterator[Word]:
        """Admissible words of length n in lexicographic order."""
        if n < 1:
            return
        stack = [(a,) for a in range(self.m, 0, -1)]
        while stack:
            w = stack.pop()
            if len(w) == n:
                yield Word(w)
                continue
            for b in range(self.m, 0, -1):
                if self.adjacency[w[-1] - 1, b - 1]:
                    stack.append(w + (b,))

    def count_words(self, n: int) -> int:
        H = self.adjacency
        return int(np.linalg.matrix_power(H, n - 1).sum()) if n >= 1 else 0

    def to_text(self) -> str:
        if self.is_full:
            return f"full {self.m}"
        rows = " ".join("".join(str(int(v)) for v in row) for row in self.adjacency)
        return f"sft {self.m} {rows}"

    @classmethod
    def from_text(cls, text: str) -> "SFT":
        parts = text.split()
        if not parts:
            raise ContractViolation("empty subshift description")
        if parts[0] == "full" and len(parts) == 2:
            return cls.full(int(parts[1]))
        if parts[0] == "sft":
            m = int(parts[1])
            rows = parts[2:]
            if len(rows) != m or any(len(r) != m for r in rows):
                raise ContractViolation(f"sft {m} needs {m} rows of {m} digits")
            return cls(m, np.array([[int(ch) for ch in r] for r in rows]))
        raise ContractViolation(f"unrecognised subshift description: {text!r}")


def _greedy_walk(sft: SFT, a: int, forward: bool) -> tuple[list[int], list[int]]:
    """Walk from ``a`` along the smallest allowed letter until one repeats.

    Returns (steps, cycle): the letters visited after ``a`` in walking order,
    and the cycle that then repeats forever in walking order.
    """
    H = sft.adjacency if forward else sft.adjacency.T
    seen: dict[int, int] = {}
    walk = []
    cur = a
    while cur not in seen:
        seen[cur] = len(walk)
        walk.append(cur)
        cur = int(np.flatnonzero(H[cur - 1])[0]) + 1
    return walk[1:], walk[seen[cur]:]


@dataclass(frozen=True, eq=False)
class SymbolicPoint:
    """Eventually periodic bi-infinite sequence.

    The sequence reads ``... L L L core R R R ...`` where ``core[origin]`` sits at
    position 0; ``left_period[-1]`` is the letter just before the core.
    """

    left_period: Word
    core: Word
    right_period: Word
    origin: int = 0

    def __post_init__(self):
        for name in ("left_period", "core", "right_period"):
            object.__setattr__(self, name, as_word(getattr(self, name)))

    def __getitem__(self, i: int) -> int:
        j = self.origin + i
        n = len(self.core)
        if 0 <= j < n:
            return self.core[j]
        if j >= n:
            return self.right_period[(j - n) % len(self.right_period)]
        return self.left_period[j % len(self.left_period)]

    def window(self, lo: int, hi: int) -> tuple[int, ...]:
        """Letters at positions lo..hi inclusive."""
        return tuple(self[i] for i in range(lo, hi + 1))

    def shift(self, n: int = 1) -> "SymbolicPoint":
        """Image under the n-th power of the left shift: (shift x)_i = x_{i+n}."""
        return SymbolicPoint(self.left_period, self.core, self.right_period, self.origin + n)

    def _horizon(self, other: "SymbolicPoint") -> tuple[int, int]:
        # beyond these bounds both sequences are inside their periodic tails,
        # so differences repeat with the lcm of the periods
        right = max(0, *(len(p.core) - p.origin for p in (self, other)))
        right += math.lcm(len(self.right_period), len(other.right_period))
        left = max(0, *(p.origin for p in (self, other)))
        left += math.lcm(len(self.left_period), len(other.left_period))
        return left, right

    def first_difference(self, other: "SymbolicPoint") -> int | None:
        """Smallest |i| with x_i != y_i, or None if the sequences agree."""
        left, right = self._horizon(other)
        for r in range(0, max(left, right) + 1):
            if r <= right and self[r] != other[r]:
                return r
            if r <= left and self[-r] != other[-r]:
                return r
        return None

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolicPoint):
            return NotImplemented
        return self.first_difference(other) is None

    __hash__ = None

    def distance(self, other: "SymbolicPoint") -> float:
        j = self.first_difference(other)
        return 0.0 if j is None else 2.0 ** (-j)

    def agrees_forward(self, other: "SymbolicPoint", start: int = 0) -> bool:
        """x_i = y_i for every i >= start."""
        _, right = self._horizon(other)
        return all(self[i] == other[i] for i in range(start, max(right, start) + 1))

    def agrees_backward(self, other: "SymbolicPoint", stop: int = 0) -> bool:
        """x_i = y_i for every i <= stop."""
        left, _ = self._horizon(other)
        return all(self[i] == other[i] for i in range(min(-left, stop), stop + 1))

    def is_admissible(self, sft: SFT) -> bool:
        L, C, R = self.left_period, self.core, self.right_period
        return (
            sft.is_cyclic(L)
            and sft.is_cyclic(R)
            and sft.is_admissible(tuple(L[-1:]) + tuple(C) + tuple(R[:1]))
            and sft.is_admissible(C)
        )

    def __repr__(self) -> str:
        fmt = lambda w: "".join(map(str, w))
        return f"SymbolicPoint(({fmt(self.left_period)})* {fmt(self.core)} ({fmt(self.right_period)})*, origin={self.origin})"


def periodic_point(w) -> SymbolicPoint:
    """The point (... w ; w w ...) with w_1 at position 0."""
    w = as_word(w)
    return SymbolicPoint(w, w, w, 0)


def in_local_stable(y: SymbolicPoint, x: SymbolicPoint) -> bool:
    return x.agrees_forward(y, 0)


def in_local_unstable(y: SymbolicPoint, x: SymbolicPoint) -> bool:
    return x.agrees_backward(y, 0)


def point_through(sft: SFT, w, origin: int = 0) -> SymbolicPoint:
    """An admissible eventually periodic point whose core is ``w``.

    Uses the periodic point of ``w`` when ``w`` is cyclic, and otherwise walks
    to the lexicographically first cycles on either side.
    """
    w = as_word(w)
    if not sft.is_admissible(w):
        raise ContractViolation(f"{w} is not admissible")
    if sft.is_cyclic(w):
        return SymbolicPoint(w, w, w, origin)
    steps_r, cyc_r = _greedy_walk(sft, w[-1], True)
    steps_l, cyc_l = _greedy_walk(sft, w[0], False)
    core = tuple(reversed(steps_l)) + tuple(w) + tuple(steps_r)
    # the left cycle was walked leftwards, so reverse it to read left to right
    left = tuple(reversed(cyc_l))
    return SymbolicPoint(Word(left), Word(core), Word(cyc_r), origin + len(steps_l))


@dataclass(frozen=True)
class Cylinder:
    """Points whose letters at anchor, anchor+1, ... spell ``word``."""

    anchor: int
    word: Word

    def contains(self, x: SymbolicPoint) -> bool:
        return x.window(self.anchor, self.anchor + len(self.word) - 1) == tuple(self.word)


def centered_cylinder(window) -> Cylinder:
    """Cylinder fixing positions -k..k to a window of odd length 2k+1."""
    window = as_word(window)
    if len(window) % 2 == 0:
        raise ContractViolation("centered windows have odd length")
    return Cylinder(-(len(window) // 2), window)


def _middles(sft: SFT, start: int, end: int, length: int, reach: list[np.ndarray]) -> Iterator[tuple[int, ...]]:
    """Lexicographic paths of ``length`` free letters strictly between start and end."""
    H = sft.adjacency
    if length == 0:
        if H[start - 1, end - 1]:
            yield ()
        return
    for b in range(1, sft.m + 1):
        # from b, ``length`` more edges must still reach ``end``
        if H[start - 1, b - 1] and reach[length][b - 1, end - 1]:
            for rest in _middles(sft, b, end, length - 1, reach):
                yield (b,) + rest


def enumerate_transitions(sft: SFT, a, b, max_len: int) -> list[Word]:
    """Admissible words starting with ``a`` and ending with ``b``.

    Prefix and suffix may overlap, but every word is at least as long as both.
    Ordered by length and then lexicographically.
    """
    a, b = as_word(a), as_word(b)
    if not (sft.is_admissible(a) and sft.is_admissible(b)):
        raise ContractViolation("endpoint words must be admissible")
    H = sft.adjacency
    out: list[Word] = []
    gap_max = max_len - len(a) - len(b)
    reach = [np.eye(sft.m, dtype=bool)]
    for _ in range(max(gap_max, 0) + 1):
        reach.append((reach[-1].astype(np.int64) @ H > 0))
    for n in range(max(len(a), len(b)), max_len + 1):
        overlap = len(a) + len(b) - n
        if overlap > 0:
            try:
                w = merge(a, b, overlap)
            except OverlapMismatch:
                continue
            if sft.is_admissible(w):
                out.append(w)
        else:
            for mid in _middles(sft, a[-1], b[0], -overlap, reach):
                out.append(Word(tuple(a) + mid + tuple(b)))
    return out


def transition_graph(sft: SFT, k: int) -> nx.DiGraph:
    """Graph on admissible (2k+1)-windows; u -> v when v continues u by one letter."""
    G = nx.DiGraph()
    verts = list(sft.words(2 * k + 1))
    G.add_nodes_from(verts)
    for u in verts:
        for c in range(1, sft.m + 1):
            if sft.allowed(u[-1], c):
                G.add_edge(u, Word(tuple(u[1:]) + (c,)))
    return G


def walk_word(walk: Sequence[Word]) -> Word:
    """Word spelled by a walk in the transition graph."""
    first = tuple(walk[0])
    return Word(first + tuple(v[-1] for v in walk[1:]))


def windows_of(w, k: int) -> list[Word]:
    """The sliding windows of length 2k+1 inside ``w``."""
    w = tuple(w)
    n = 2 * k + 1
    return [Word(w[i:i + n]) for i in range(len(w) - n + 1)]


def primitive_cyclic_words(sft: SFT, max_len: int) -> list[Word]:
    """Primitive cyclic words up to rotation, one representative each.

    The representative is the lexicographically least rotation; ordered by
    length and then lexicographically.
    """
    out = []
    for n in range(1, max_len + 1):
        for w in sft.words(n):
            if not sft.allowed(w[-1], w[0]):
                continue
            rots = [tuple(w[i:]) + tuple(w[:i]) for i in range(n)]
            if tuple(w) != min(rots):
                continue
            if any(n % p == 0 and tuple(w) == tuple(w[:p]) * (n // p) for p in range(1, n)):
                continue
            out.append(Word(w))
    return out


def all_points_with_window(sft: SFT, lo: int, hi: int) -> Iterator[SymbolicPoint]:
    """One point per admissible window occupying positions lo..hi."""
    for w in sft.words(hi - lo + 1):
        p = point_through(sft, w)
        yield p.shift(-lo)


__all__ = [
    "Word", "as_word", "concat", "merge", "SFT", "SymbolicPoint", "periodic_point",
    "point_through", "Cylinder", "centered_cylinder", "enumerate_transitions",
    "transition_graph", "walk_word", "windows_of", "primitive_cyclic_words",
    "in_local_stable", "in_local_unstable", "all_points_with_window",
]

