"""Regions, meshes and covering certificates for matrix families and cocycles.

A region is a finite union of closed balls: operator-norm balls B(c, r), or
chart balls {c exp(X) : ||X||_F <= r} whose boundary has no corners.  Covering
of operator-norm regions is certified on a mesh: every point of every ball lies within ``rho`` of a mesh
point, so a witness ``D u`` landing ``delta`` deep inside the region extends to
the whole ball with the margin ``delta - L*rho`` where ``L = max ||D||``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from . import matkernel as mk
from .errors import (
    ContractViolation,
    EmptyResult,
    MeshTooLarge,
    SearchExhausted,
    ShapeMismatch,
    SlackExhausted,
)

DEFAULT_MESH_CAP = 4_000_000
_CHUNK = 200_000


# ---------------------------------------------------------------------------
# regions


BALL_KINDS = ("op", "chart")


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float
    kind: str = "op"

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ContractViolation("ball radius must be positive")
        if self.kind not in BALL_KINDS:
            raise ContractViolation("unknown ball kind", kind=self.kind)


def _chart_depth(c_inv: np.ndarray, r: float, Ms: np.ndarray) -> np.ndarray:
    L = mk.batch_logm(c_inv @ Ms)
    dep = r - np.linalg.norm(L, axis=(-2, -1))
    return np.where(np.isnan(dep), -np.inf, dep)


class Region:
    """Union of closed balls B(c, r) = {M : ||M - c|| <= r} or chart balls.

    ``group`` is ``"SL"`` (centers unimodular, points taken inside SL(d)) or
    ``"GL"`` (no determinant constraint; used for scalar models).
    """

    def __init__(self, balls, group: str = "SL", tol: mk.ToleranceConfig = mk.DEFAULT_TOL):
        balls = tuple(b if isinstance(b, Ball) else Ball(*b) for b in balls)
        if not balls:
            raise EmptyResult("a region needs at least one ball")
        d = balls[0].center.shape[0]
        for b in balls:
            if b.center.shape != (d, d):
                raise ShapeMismatch("all centers must share one square shape")
            if group == "SL" and abs(abs(np.linalg.det(b.center)) - 1.0) > tol.det_tol * 10:
                raise ContractViolation("SL region centers must be unimodular", det=float(np.linalg.det(b.center)))
        self.balls = balls
        self.group = group
        self.dim = d
        if group != "SL" and any(b.kind == "chart" for b in balls):
            raise ContractViolation("chart balls are only available in SL regions")
        self._centers = np.array([b.center for b in balls])
        self._radii = np.array([b.radius for b in balls])
        self._kinds = tuple(b.kind for b in balls)
        self._inverses = [np.linalg.inv(c) if k == "chart" else None for c, k in zip(self._centers, self._kinds)]

    def __len__(self) -> int:
        return len(self.balls)

    def __repr__(self) -> str:
        return f"Region({len(self.balls)} balls, d={self.dim}, {self.group})"

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def radii(self) -> np.ndarray:
        return self._radii

    @property
    def kinds(self) -> tuple[str, ...]:
        return self._kinds

    @property
    def has_chart(self) -> bool:
        return "chart" in self._kinds

    def depth_many(self, Ms: np.ndarray) -> np.ndarray:
        """max over balls of the depth r - ||M - c|| (r - ||log c^{-1} M||_F for chart balls)."""
        Ms = np.asarray(Ms, dtype=float)
        out = np.full(Ms.shape[0], -np.inf)
        for c, r, k, ci in zip(self._centers, self._radii, self._kinds, self._inverses):
            dep = _chart_depth(ci, r, Ms) if k == "chart" else r - mk.batch_norm(Ms - c)
            np.maximum(out, dep, out=out)
        return out

    def _op_extent(self) -> list[tuple[np.ndarray, float]]:
        # chart balls sit inside B(c, ||c|| (e^r - 1)) since ||X||_op <= ||X||_F
        return [(c, r if k == "op" else mk.operator_norm(c) * math.expm1(r))
                for c, r, k in zip(self._centers, self._radii, self._kinds)]

    def contains_many(self, Ms: np.ndarray) -> np.ndarray:
        return self.depth_many(Ms) >= 0

    def contains(self, M) -> bool:
        return bool(self.contains_many(np.asarray(M, dtype=float)[None])[0])

    def norm_bound(self) -> float:
        """Upper bound on ||D|| and ||D^{-1}|| over the region (the constant K_U).

        For unimodular D, ||D^{-1}|| <= ||D||^{d-1}.
        """
        top = float(max(mk.operator_norm(c) + r for c, r in self._op_extent()))
        if self.group == "SL":
            return max(top, top ** (self.dim - 1))
        bot = min(mk.singular_values(c)[-1] - r for c, r in self._op_extent())
        if bot <= 0:
            return math.inf
        return max(top, 1.0 / bot)

    def reach(self, point=None) -> float:
        """max ||M - point|| over the region (point defaults to Id)."""
        p = np.eye(self.dim) if point is None else np.asarray(point, dtype=float)
        return float(max(mk.operator_norm(c - p) + r for c, r in self._op_extent()))

    def as_dict(self) -> dict:
        return {
            "group": self.group,
            "dim": self.dim,
            "balls": [{"center": mk.matrix_to_list(b.center), "radius": b.radius, "kind": b.kind}
                      for b in self.balls],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Region":
        d = int(data["dim"])
        balls = [Ball(mk.matrix_from_list(b["center"], d), float(b["radius"]), b.get("kind", "op"))
                 for b in data["balls"]]
        return cls(balls, data.get("group", "SL"))


def ball(center, radius: float, group: str = "SL") -> Region:
    return Region([Ball(center, radius)], group)


def region_shrink(U: Region, delta: float) -> Region:
    """Per-ball inner approximation of U_(delta); balls with r <= delta vanish."""
    if not delta > 0:
        raise ContractViolation("shrink margin must be positive")
    kept = [Ball(b.center, b.radius - delta, b.kind) for b in U.balls if b.radius > delta]
    if not kept:
        raise EmptyResult("every ball vanishes under the shrink", delta=delta)
    return Region(kept, U.group)


def region_contains(U: Region, M) -> bool:
    return U.contains(M)


# ---------------------------------------------------------------------------
# meshes


def lie_basis(d: int, group: str = "SL") -> np.ndarray:
    """Frobenius-orthonormal basis of sl(d) (or gl(d) when group is GL)."""
    out = []
    for i in range(d):
        for j in range(d):
            if i != j:
                E = np.zeros((d, d))
                E[i, j] = 1.0
                out.append(E)
    for i in range(d - 1):
        v = np.zeros(d)
        v[: i + 1] = 1.0
        v[i + 1] = -(i + 1)
        out.append(np.diag(v / np.linalg.norm(v)))
    if group == "GL":
        out.append(np.eye(d) / math.sqrt(d))
    return np.array(out).reshape(len(out), d, d)


def batch_expm(X: np.ndarray) -> np.ndarray:
    """exp of a stack of square matrices; closed form for 2x2 traceless input."""
    X = np.asarray(X, dtype=float)
    d = X.shape[-1]
    if d == 1:
        return np.exp(X)
    if d == 2:
        tr = X[:, 0, 0] + X[:, 1, 1]
        mu = 0.5 * tr
        Y = X - mu[:, None, None] * np.eye(2)
        q = -(Y[:, 0, 0] * Y[:, 1, 1] - Y[:, 0, 1] * Y[:, 1, 0])
        rt = np.sqrt(np.abs(q))
        small = rt < 1e-4
        safe = np.where(small, 1.0, rt)
        c = np.where(q >= 0, np.cosh(rt), np.cos(rt))
        s = np.where(q >= 0, np.sinh(rt), np.sin(rt)) / safe
        # series branch keeps full precision near the origin
        c = np.where(small, 1.0 + q / 2 + q * q / 24, c)
        s = np.where(small, 1.0 + q / 6 + q * q / 120, s)
        out = c[:, None, None] * np.eye(2) + s[:, None, None] * Y
        return out * np.exp(mu)[:, None, None]
    return _taylor_expm(X)


def _taylor_expm(X: np.ndarray) -> np.ndarray:
    # scaling and squaring with a degree 12 Taylor polynomial, one scale per stack
    if not len(X):
        return X.copy()
    top = float(np.abs(X).sum(axis=-1).max())
    k = max(0, math.ceil(math.log2(top / 0.25))) if top > 0.25 else 0
    Y = X / 2.0**k
    eye = np.eye(X.shape[-1])
    out = eye + Y / 12.0
    for j in range(11, 0, -1):
        out = eye + (Y @ out) / j
    for _ in range(k):
        out = out @ out
    return out


@dataclass(frozen=True)
class BallGrid:
    """Lattice data for one ball: points c exp(h z) with z integer.

    ``chart_radius`` bounds ||log(c^{-1} g)|| for g in the ball, ``cover``
    is the spectral distance from any chart point to its nearest lattice
    point and ``lipschitz = ||c|| exp(chart_radius + cover)`` bounds the
    exponential chart's expansion on that range.
    """

    center_index: int
    chart_radius: float
    pitch: float
    cover: float
    lipschitz: float
    count: int

    def as_dict(self) -> dict:
        return {
            "ball": self.center_index,
            "chart_radius": self.chart_radius,
            "pitch": self.pitch,
            "cover": self.cover,
            "lipschitz": self.lipschitz,
            "count": self.count,
        }


@dataclass
class Mesh:
    points: np.ndarray
    ball_of_point: np.ndarray
    rho: float
    target: Region
    grids: list[BallGrid]

    def __len__(self) -> int:
        return len(self.points)

    def summary(self) -> dict:
        return {"rho": self.rho, "points": len(self), "grids": [g.as_dict() for g in self.grids]}


def _grid_params(c: np.ndarray, r: float, rho: float, n: int, d: int) -> tuple[float, float, float, float]:
    kappa = mk.operator_norm(np.linalg.inv(c))
    if kappa * r >= 1:
        raise ContractViolation("ball too large for the logarithmic chart", radius=r, kappa=kappa)
    R = -math.log1p(-kappa * r)
    cn = mk.operator_norm(c)
    # largest s with ||c|| s exp(R + s) <= rho
    lo, hi = 0.0, rho / cn
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cn * mid * math.exp(R + mid) <= rho:
            lo = mid
        else:
            hi = mid
    s = lo
    h = 2.0 * s / math.sqrt(n)
    return R, s, h, cn * math.exp(R + s)


def _lattice(n: int, bound: float, h: float):
    """Integer vectors z with ||h z||_2 <= bound, yielded in chunks."""
    M = int(math.floor(bound / h))
    axis = np.arange(-M, M + 1)
    if n == 1:
        yield axis[:, None]
        return
    inner = np.array(list(itertools.product(axis, repeat=min(n - 1, 2))), dtype=np.int64) if n > 1 else None
    # split off the leading coordinates so each chunk stays small
    lead_dims = n - inner.shape[1]
    for lead in itertools.product(axis, repeat=lead_dims):
        lead = np.array(lead, dtype=np.int64)
        rem = (bound / h) ** 2 - float(lead @ lead)
        if rem < 0:
            continue
        keep = (inner * inner).sum(axis=1) <= rem
        blk = inner[keep]
        if len(blk):
            yield np.hstack([np.broadcast_to(lead, (len(blk), lead_dims)), blk])


def _op_only(U: Region) -> None:
    # the mesh argument needs depth functions that are 1-Lipschitz in the operator norm
    if U.has_chart:
        raise ContractViolation("meshes are only built for operator-norm balls")


def estimate_mesh_size(U: Region, rho: float) -> int:
    _op_only(U)
    basis = lie_basis(U.dim, U.group)
    n = len(basis)
    total = 0
    for c, r in zip(U.centers, U.radii):
        if rho >= r:
            total += 1
            continue
        R, s, h, _ = _grid_params(c, r, rho, n, U.dim)
        F = math.sqrt(U.dim) * (R + s)
        vol = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * F**n
        total += int(vol * _op_ball_fraction(basis, F, R + s) / h**n) + 1
    return total


def _op_ball_fraction(basis: np.ndarray, F: float, bound: float, samples: int = 4000) -> float:
    """Volume share of {||X||_op <= bound} inside the Frobenius ball of radius F."""
    u = np.random.default_rng(12345).normal(size=(samples, len(basis)))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    op = mk.batch_norm(np.tensordot(u, basis, axes=1))
    return float(np.minimum(1.0, (bound / (F * op)) ** len(basis)).mean())


def build_mesh(U: Region, rho: float, cap: int = DEFAULT_MESH_CAP) -> Mesh:
    """Mesh rho-dense in every ball of U (inside SL(d) for SL regions).

    For g in B(c, r) write g = c exp(X); then ||X|| <= R = -log(1 - ||c^{-1}|| r).
    The nearest lattice point Y to X satisfies ||X - Y|| <= s, and
    ||c e^X - c e^Y|| <= ||c|| s e^{R+s} <= rho.
    """
    if not rho > 0:
        raise ContractViolation("mesh fineness must be positive")
    _op_only(U)
    est = estimate_mesh_size(U, rho)
    if est > cap:
        raise MeshTooLarge("mesh would exceed the point cap", estimate=est, cap=cap)
    basis = lie_basis(U.dim, U.group)
    n = len(basis)
    d = U.dim
    pts, owner, grids = [], [], []
    for bi, (c, r) in enumerate(zip(U.centers, U.radii)):
        if rho >= r:
            pts.append(c[None])
            owner.append(np.full(1, bi))
            grids.append(BallGrid(bi, 0.0, 0.0, 0.0, mk.operator_norm(c), 1))
            continue
        R, s, h, lip = _grid_params(c, r, rho, n, d)
        count = 0
        for Z in _lattice(n, math.sqrt(d) * (R + s), h):
            for lo in range(0, len(Z), _CHUNK):
                X = np.tensordot(Z[lo:lo + _CHUNK] * h, basis, axes=1)
                X = X[mk.batch_norm(X) <= R + s]
                if not len(X):
                    continue
                G = c @ batch_expm(X)
                G = G[mk.batch_norm(G - c) <= r + rho]
                count += len(G)
                if sum(len(p) for p in pts) + count > cap:
                    raise MeshTooLarge("mesh exceeds the point cap", cap=cap)
                pts.append(G)
                owner.append(np.full(len(G), bi))
        grids.append(BallGrid(bi, R, h, s, lip, count))
    return Mesh(np.concatenate(pts), np.concatenate(owner), float(rho), U, grids)


# ---------------------------------------------------------------------------
# family certificates


@dataclass
class FamilyCertificate:
    family: list[np.ndarray]
    region: Region
    delta: float
    check_delta: float
    rho: float
    lipschitz: float
    mesh: Mesh
    witnesses: np.ndarray

    def as_dict(self) -> dict:
        return {
            "kind": "family",
            "family": [mk.matrix_to_list(D) for D in self.family],
            "region": self.region.as_dict(),
            "delta": self.delta,
            "check_delta": self.check_delta,
            "rho": self.rho,
            "lipschitz": self.lipschitz,
            "mesh": self.mesh.summary(),
            "witnesses": self.witnesses.tolist(),
        }


@dataclass
class CounterexamplePoint:
    point: np.ndarray
    ball: int
    best_margin: float
    best_index: int

    def as_dict(self) -> dict:
        return {
            "kind": "counterexample",
            "point": mk.matrix_to_list(self.point),
            "ball": self.ball,
            "best_margin": self.best_margin,
            "best_index": self.best_index,
        }


def _same_region(U: Region, V: Region) -> bool:
    if U is V:
        return True
    return (len(U) == len(V) and U.group == V.group and U.kinds == V.kinds
            and np.array_equal(U.radii, V.radii) and np.array_equal(U.centers, V.centers))


def family_lipschitz(D) -> float:
    return float(max(mk.operator_norm(M) for M in D))


def family_margins(D, U: Region, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each point, the best depth max_i depth_U(D_i u) and its argmax."""
    best = np.full(len(points), -np.inf)
    arg = np.full(len(points), -1, dtype=np.int64)
    for i, Di in enumerate(D):
        dep = np.empty(len(points))
        for lo in range(0, len(points), _CHUNK):
            dep[lo:lo + _CHUNK] = U.depth_many(Di @ points[lo:lo + _CHUNK])
        better = dep > best
        best[better] = dep[better]
        arg[better] = i
    return best, arg


def verify_family_covering(D, U: Region, delta: float, rho: float, mesh: Mesh | None = None,
                           cap: int = DEFAULT_MESH_CAP):
    """Certificate that closure(U) lies in the union of D_i^{-1} U_(delta - L rho).

    Witnesses are required to land in region_shrink(U, delta); the certified
    margin recorded on the certificate is ``delta - L*rho``.
    """
    D = [np.asarray(M, dtype=float) for M in D]
    if not D:
        raise ContractViolation("empty family")
    L = family_lipschitz(D)
    if delta <= L * rho:
        raise SlackExhausted("delta must exceed L*rho", delta=delta, rho=rho, lipschitz=L)
    inner = region_shrink(U, delta)
    if mesh is None:
        mesh = build_mesh(U, rho, cap)
    elif not (_same_region(mesh.target, U) and mesh.rho <= rho):
        raise ContractViolation("mesh does not match region and rho")
    pts = mesh.points
    wit = np.full(len(pts), -1, dtype=np.int64)
    for i, Di in enumerate(D):
        todo = np.flatnonzero(wit < 0)
        if not len(todo):
            break
        for lo in range(0, len(todo), _CHUNK):
            idx = todo[lo:lo + _CHUNK]
            ok = inner.contains_many(Di @ pts[idx])
            wit[idx[ok]] = i
    bad = np.flatnonzero(wit < 0)
    if len(bad):
        best, arg = family_margins(D, inner, pts[bad])
        j = int(np.argmin(best))
        k = int(bad[j])
        return CounterexamplePoint(pts[k].copy(), int(mesh.ball_of_point[k]), float(best[j]), int(arg[j]))
    return FamilyCertificate(D, U, float(delta - L * rho), float(delta), float(rho), L, mesh, wit)


def recheck_certificate(cert: FamilyCertificate) -> bool:
    """Re-derive the mesh and confirm every recorded witness, with no search."""
    mesh = build_mesh(cert.region, cert.rho, cap=max(DEFAULT_MESH_CAP, len(cert.witnesses) + 1))
    if len(mesh) != len(cert.witnesses):
        return False
    if cert.check_delta - family_lipschitz(cert.family) * cert.rho <= 0:
        return False
    inner = region_shrink(cert.region, cert.check_delta)
    for i, Di in enumerate(cert.family):
        idx = np.flatnonzero(cert.witnesses == i)
        for lo in range(0, len(idx), _CHUNK):
            part = idx[lo:lo + _CHUNK]
            if not inner.contains_many(Di @ mesh.points[part]).all():
                return False
    return bool((cert.witnesses >= 0).all())


def certificate_from_dict(data: dict) -> FamilyCertificate:
    region = Region.from_dict(data["region"])
    d = region.dim
    fam = [mk.matrix_from_list(v, d) for v in data["family"]]
    mesh = build_mesh(region, float(data["rho"]), cap=max(DEFAULT_MESH_CAP, len(data["witnesses"]) + 1))
    return FamilyCertificate(
        fam, region, float(data["delta"]), float(data["check_delta"]), float(data["rho"]),
        float(data["lipschitz"]), mesh, np.asarray(data["witnesses"], dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Monte-Carlo audit


@dataclass
class AuditReport:
    samples: int
    failures: int
    min_margin: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def sample_region(U: Region, n: int, rng: np.random.Generator, boundary_share: float = 0.5) -> np.ndarray:
    """Points of closure(U); a share of them is pushed onto ball boundaries.

    Interior draws use the exponential chart with Gaussian directions and a
    radius law r u^{1/dim}; boundary draws bisect each ray to the sphere (chart
    balls need no bisection).
    """
    basis = lie_basis(U.dim, U.group)
    k = len(basis)
    out = []
    per = np.bincount(rng.integers(0, len(U), size=n), minlength=len(U))
    for c, r, kind, m in zip(U.centers, U.radii, U.kinds, per):
        if m == 0:
            continue
        if kind == "chart":
            X = np.tensordot(rng.normal(size=(m, k)), basis, axes=1)
            X /= np.linalg.norm(X, axis=(-2, -1))[:, None, None]
            t = r * rng.uniform(size=m) ** (1.0 / k)
            t[: int(round(boundary_share * m))] = r
            out.append(c @ batch_expm(X * t[:, None, None]))
            continue
        R = -math.log1p(-mk.operator_norm(np.linalg.inv(c)) * r)
        X = np.tensordot(rng.normal(size=(m, k)), basis, axes=1)
        X /= mk.batch_norm(X)[:, None, None]
        nb = int(round(boundary_share * m))
        t_in = R * rng.uniform(size=m - nb) ** (1.0 / k)
        G_in = c @ batch_expm(X[nb:] * t_in[:, None, None])
        G_in = G_in[mk.batch_norm(G_in - c) <= r]
        lo, hi = np.zeros(nb), np.full(nb, R)
        for _ in range(44):
            mid = 0.5 * (lo + hi)
            inside = mk.batch_norm(c @ batch_expm(X[:nb] * mid[:, None, None]) - c) <= r
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        G_b = c @ batch_expm(X[:nb] * lo[:, None, None])
        out += [G_in, G_b]
    pts = np.concatenate(out)
    return pts[: n]


def adversarial_margin(D, U: Region, points: np.ndarray, rng: np.random.Generator, starts: int = 64,
                       rounds: int = 200, step: float = 0.02) -> tuple[float, np.ndarray]:
    """Local search for low-margin points of closure(U), started at the worst samples.

    Each round proposes u exp(s X) with random X in the Lie algebra and keeps
    moves that stay in closure(U) and lower the margin; s shrinks on failure.
    Returns the lowest margin found and the corresponding points.
    """
    best, _ = family_margins(D, U, points)
    idx = np.argsort(best)[:starts]
    P, val = points[idx].copy(), best[idx].copy()
    basis = lie_basis(U.dim, U.group)
    s = np.full(len(P), step)
    for _ in range(rounds):
        X = np.tensordot(rng.normal(size=(len(P), len(basis))), basis, axes=1)
        X /= mk.batch_norm(X)[:, None, None]
        Q = P @ batch_expm(X * s[:, None, None])
        ok = U.depth_many(Q) >= 0
        v, _ = family_margins(D, U, Q)
        take = ok & (v < val)
        P[take], val[take] = Q[take], v[take]
        s = np.where(take, s * 1.2, s * 0.85)
    return float(val.min()), P


def audit_covering(D, U: Region, n: int = 10_000, seed: int = 0, margin: float = 0.0) -> AuditReport:
    """Independent check: sampled u in closure(U) must have some D_i u in U."""
    rng = np.random.default_rng(seed)
    pts = sample_region(U, n, rng)
    while len(pts) < n:
        pts = np.concatenate([pts, sample_region(U, n - len(pts), rng)])
    best, _ = family_margins(D, U, pts)
    return AuditReport(len(pts), int((best < margin).sum()), float(best.min()))


# ---------------------------------------------------------------------------
# constructions


J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _rot2(a: float) -> np.ndarray:
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def _w2(theta: float) -> np.ndarray:
    return math.cos(theta) * np.diag([1.0, -1.0]) + math.sin(theta) * np.array([[0.0, 1.0], [1.0, 0.0]])


def design_sl2(tau: float, shift: float, radius: float, phase: float = 0.0):
    """Four matrices and a three-ball region in SL(2).

    Two elements are exp(tau W) for symmetric traceless W a third of a turn
    apart; the other two carry the remaining direction composed with the
    rotations R(-shift), R(+shift).  The region is the union of radius balls
    centered at R(-shift), Id, R(shift).  Left multiplication by a rotation is
    an isometry, so the rotation parts move balls onto their neighbours while
    the symmetric parts push points inward.
    """
    th = [phase, phase + 2 * math.pi / 3, phase + 4 * math.pi / 3]
    S = [sla.expm(tau * _w2(t)) for t in th]
    family = [S[0], S[1], _rot2(-shift) @ S[2], _rot2(shift) @ S[2]]
    region = Region([Ball(_rot2(j * shift), radius) for j in (-1, 0, 1)])
    return family, region


def simplex_directions(n: int, frame: np.ndarray | None = None) -> np.ndarray:
    """n + 1 unit vectors of R^n with zero sum (a regular simplex), rotated by ``frame``.

    Every unit u has max_i <u, -v_i> >= 1/n, which is what makes the pushes
    exp(t v_i) move each boundary point of a round ball inward.
    """
    S = np.eye(n + 1) - 1.0 / (n + 1)
    U, sv, _ = np.linalg.svd(S)
    P = U[:, :n] * sv[:n]
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    return P if frame is None else P @ np.asarray(frame, dtype=float)


def design_sl_simplex(d: int, tau: float, radius: float, frame: np.ndarray | None = None):
    """d^2 pushes exp(tau v_i) along a simplex of sl(d) and the chart ball of Id of that radius."""
    basis = lie_basis(d)
    V = np.tensordot(simplex_directions(len(basis), frame), basis, axes=1)
    family = list(batch_expm(tau * V))
    return family, Region([Ball(np.eye(d), radius, "chart")])


@dataclass
class SearchConfig:
    seed: int = 0
    rho_fraction: float = 0.8
    screen_points: int = 4000
    max_candidates: int = 64
    mesh_cap: int = DEFAULT_MESH_CAP
    audit_points: int = 10_000
    certify_attempts: int = 4
    refine_top: int = 6
    refine_points: int = 40_000
    log: list = field(default_factory=list)


def _sl2_candidates(eps: float, rng: np.random.Generator) -> list[tuple]:
    out = []
    for tau in (0.08, 0.1, 0.12):
        for ratio in (1.3, 1.5, 1.7):
            for rr in (2.6, 3.0, 3.4):
                shift, radius = ratio * tau, rr * tau
                if shift + radius < eps and tau * 2.6 < eps:
                    out.append((tau, shift, radius, float(rng.uniform(0, 2 * math.pi))))
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def _sl3_candidates(eps: float, rng: np.random.Generator, count: int) -> list[tuple]:
    # the chart ball of radius R reaches e^R - 1 in operator norm
    top = math.log1p(0.8 * eps)
    radii = [R for R in (0.25, 0.3, 0.35) if R <= top] or [top]
    grid = [(f * R, R) for R in radii for f in (0.15, 0.2, 0.25)]
    return [(*grid[i % len(grid)], mk.haar_orthogonal(rng, 8)) for i in range(count)]


@dataclass
class BuildResult:
    family: list[np.ndarray]
    region: Region
    certificate: FamilyCertificate | None
    audit: AuditReport
    params: dict
    certified: bool

    def as_dict(self) -> dict:
        out = {
            "family": [mk.matrix_to_list(D) for D in self.family],
            "region": self.region.as_dict(),
            "params": self.params,
            "certified": self.certified,
            "audit": {"samples": self.audit.samples, "failures": self.audit.failures,
                      "min_margin": self.audit.min_margin},
        }
        if self.certificate is not None:
            out["certificate"] = self.certificate.as_dict()
        return out


def _certify(family, region: Region, screen: float, cfg: "SearchConfig"):
    """Mesh at rho = rho_fraction * screen / (2L); delta is the mesh minimum depth."""
    L = family_lipschitz(family)
    rho = cfg.rho_fraction * screen / (2 * L)
    if estimate_mesh_size(region, rho) > cfg.mesh_cap:
        raise MeshTooLarge("mesh would exceed the point cap", estimate=estimate_mesh_size(region, rho),
                           cap=cfg.mesh_cap)
    mesh = build_mesh(region, rho, cfg.mesh_cap)
    delta = float(family_margins(family, region, mesh.points)[0].min()) * (1 - 1e-9)
    if delta <= L * rho:
        return CounterexamplePoint(np.eye(region.dim), -1, delta - L * rho, -1)
    return verify_family_covering(family, region, delta, rho, mesh=mesh)


def build_sl_covering_family(d: int, eps: float, cfg: SearchConfig | None = None) -> BuildResult:
    """Seeded search for d^2 matrices within eps of Id covering a region near Id.

    Candidates are screened on boundary-weighted samples and then, best first,
    passed to verify_family_covering.  For d = 3 the candidates are simplex
    pushes on a chart ball, which has no mesh certificate; as when a mesh would
    exceed the cap, the best screened candidate is then returned uncertified
    together with its Monte-Carlo audit.
    """
    cfg = cfg or SearchConfig()
    rng = np.random.default_rng(cfg.seed)
    if d == 2:
        cands = [("sl2", c) for c in _sl2_candidates(eps, rng)]
    elif d == 3:
        cands = [("sl3", c) for c in _sl3_candidates(eps, rng, cfg.max_candidates)]
    else:
        raise ContractViolation("covering constructions are available for d = 2 and d = 3", d=d)
    screened = []
    samples: dict = {}

    def points_for(region, count):
        # one sample per region geometry and size, seeded by its order of appearance
        key = (region.centers.tobytes(), region.radii.tobytes(), count)
        if key not in samples:
            samples[key] = sample_region(region, count, np.random.default_rng([cfg.seed, len(samples)]), 0.8)
        return samples[key]

    for kind, c in cands[: cfg.max_candidates]:
        if kind == "sl2":
            tau, shift, radius, phase = c
            family, region = design_sl2(tau, shift, radius, phase)
            params = {"design": "rotation-shifted", "tau": tau, "shift": shift, "radius": radius, "phase": phase}
        else:
            tau, radius, frame = c
            family, region = design_sl_simplex(3, tau, radius, frame)
            params = {"design": "simplex", "tau": tau, "radius": radius, "frame": mk.matrix_to_list(frame)}
        if max(mk.operator_norm(D - np.eye(d)) for D in family) >= eps or region.reach() >= eps:
            continue
        margin = float(family_margins(family, region, points_for(region, cfg.screen_points))[0].min())
        cfg.log.append({**params, "screen_margin": margin})
        if margin > 0:
            screened.append((margin, len(screened), family, region, params))
    if not screened:
        raise SearchExhausted("no candidate passed the screen", candidates=len(cands), log=cfg.log[-5:])
    screened.sort(key=lambda t: (-t[0], t[1]))
    refined = []
    for margin, i, family, region, params in screened[: cfg.refine_top]:
        m2 = float(family_margins(family, region, points_for(region, cfg.refine_points))[0].min())
        cfg.log.append({**params, "refined_margin": m2})
        if m2 > 0:
            refined.append((min(margin, m2), i, family, region, params))
    if not refined:
        raise SearchExhausted("no candidate survived the refined screen", log=cfg.log[-5:])
    screened = refined
    screened.sort(key=lambda t: (-t[0], t[1]))
    for margin, _, family, region, params in screened[: cfg.certify_attempts]:
        if region.has_chart:
            cfg.log.append({"uncertified": "chart balls admit no mesh certificate"})
            break
        try:
            cert = _certify(family, region, margin, cfg)
        except MeshTooLarge as exc:
            cfg.log.append({"uncertified": exc.report()})
            break
        if isinstance(cert, FamilyCertificate):
            audit = audit_covering(family, region, cfg.audit_points, seed=cfg.seed + 1)
            return BuildResult(family, region, cert, audit,
                               {**params, "screen_margin": margin, "delta": cert.delta, "rho": cert.rho}, True)
        cfg.log.append({**params, "counterexample_margin": cert.best_margin})
    margin, _, family, region, params = screened[0]
    audit = audit_covering(family, region, cfg.audit_points, seed=cfg.seed + 1)
    return BuildResult(family, region, None, audit, {**params, "screen_margin": margin}, False)


# ---------------------------------------------------------------------------
# scalar model and GL families


def scalar_interval(a: float, b: float) -> Region:
    """The interval [a, b] of positive reals as a 1 x 1 GL region."""
    if not 0 < a < b:
        raise ContractViolation("need 0 < a < b")
    return Region([Ball([[0.5 * (a + b)]], 0.5 * (b - a))], "GL")


def interval_covering_exact(a: float, b: float, scalars) -> bool:
    """Whether [a, b] lies in the union of the open intervals (a/s, b/s)."""
    pieces = [(a / s, b / s) for s in scalars]
    cur = a
    while True:
        # cur must sit strictly inside some open piece
        reach = max((hi for lo, hi in pieces if lo < cur < hi), default=None)
        if reach is None:
            return False
        if reach > b:
            return True
        cur = reach


def verify_scalar_covering(scalars, a: float, b: float, delta: float, rho: float):
    """The 1-D mesh certificate for maps t -> s t on [a, b]."""
    U = scalar_interval(a, b)
    fam = [np.array([[float(s)]]) for s in scalars]
    return verify_family_covering(fam, U, delta, rho)


class ScaledRegion:
    """{lambda D : a <= lambda <= b, D in U} inside GL(d), lambda = det^{1/d}."""

    def __init__(self, region: Region, a: float, b: float):
        if not 0 < a < b:
            raise ContractViolation("need 0 < a < b")
        self.region = region
        self.a = float(a)
        self.b = float(b)
        self.dim = region.dim

    def split(self, Ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        det = np.linalg.det(Ms)
        lam = np.where(det > 0, np.abs(det) ** (1.0 / self.dim), np.nan)
        return lam, Ms / np.where(np.isnan(lam), 1.0, lam)[:, None, None]

    def contains_many(self, Ms: np.ndarray) -> np.ndarray:
        lam, D = self.split(np.asarray(Ms, dtype=float))
        ok = (lam >= self.a) & (lam <= self.b)
        return ok & self.region.contains_many(D)

    def contains(self, M) -> bool:
        return bool(self.contains_many(np.asarray(M, dtype=float)[None])[0])

    def as_dict(self) -> dict:
        return {"region": self.region.as_dict(), "a": self.a, "b": self.b}


@dataclass
class GLCertificate:
    sl: FamilyCertificate
    scalar: FamilyCertificate
    family: list[np.ndarray]
    region: ScaledRegion
    scalars: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "kind": "gl",
            "scalars": list(self.scalars),
            "family": [mk.matrix_to_list(D) for D in self.family],
            "sl": self.sl.as_dict(),
            "scalar": self.scalar.as_dict(),
            "a": self.region.a,
            "b": self.region.b,
        }


def build_gl_covering_family(sl_family, sl_region: Region, a: float = 1.0, b: float = 7.0,
                             scalars=(2.0, 1.0 / 3.0)):
    """{s D_i} for the scalars and the SL family, with region {lambda D}.

    A point lambda D is moved by s D_i to (s lambda)(D_i D), so the covering
    holds when the SL family covers U and the scalars cover [a, b].
    """
    fam = [s * np.asarray(D, dtype=float) for s in scalars for D in sl_family]
    return fam, ScaledRegion(sl_region, a, b)


def verify_gl_covering(sl_cert: FamilyCertificate, a: float, b: float, scalars=(2.0, 1.0 / 3.0),
                       delta: float | None = None, rho: float | None = None):
    """GL certificate as the product of the SL certificate and the scalar one."""
    if delta is None:
        delta = 0.05 * (b - a) / max(scalars) / 2
    if rho is None:
        rho = 0.5 * delta / max(scalars)
    sc = verify_scalar_covering(scalars, a, b, delta, rho)
    if not isinstance(sc, FamilyCertificate):
        return sc
    fam, region = build_gl_covering_family(sl_cert.family, sl_cert.region, a, b, scalars)
    return GLCertificate(sl_cert, sc, fam, region, tuple(float(s) for s in scalars))


def audit_gl_covering(cert: GLCertificate, n: int = 10_000, seed: int = 0) -> AuditReport:
    rng = np.random.default_rng(seed)
    D = sample_region(cert.region.region, n, rng)
    lam = rng.uniform(cert.region.a, cert.region.b, size=len(D))
    lam[: len(lam) // 10] = cert.region.a
    lam[len(lam) // 10: len(lam) // 5] = cert.region.b
    P = lam[:, None, None] * D
    hit = np.zeros(len(P), dtype=bool)
    for G in cert.family:
        hit |= cert.region.contains_many(G @ P)
    return AuditReport(len(P), int((~hit).sum()), float("nan"))


# ---------------------------------------------------------------------------
# cocycle covering


@dataclass
class CocycleCoveringCertificate:
    region: Region
    marked_words: list[tuple]
    lam: dict
    delta: float
    rho: float
    per_word: dict
    cocycle_depth: int

    @property
    def max_transition_length(self) -> int:
        """L: the largest number of steps taken by a transition in some Lambda_a."""
        n = 2 * self.cocycle_depth + 1
        return max(len(w) - n for ws in self.lam.values() for w in ws)

    def as_dict(self, with_witnesses: bool = True) -> dict:
        out = {
            "kind": "cocycle",
            "region": self.region.as_dict(),
            "marked_words": [list(a) for a in self.marked_words],
            "lambda": {",".join(map(str, a)): [list(w) for w in ws] for a, ws in self.lam.items()},
            "delta": self.delta,
            "rho": self.rho,
            "depth": self.cocycle_depth,
            "per_word": {},
        }
        for a, c in self.per_word.items():
            entry = c.as_dict()
            if not with_witnesses:
                entry.pop("witnesses")
            out["per_word"][",".join(map(str, a))] = entry
        return out


@dataclass
class CocycleCounterexample:
    marked_word: tuple
    point: CounterexamplePoint

    def as_dict(self) -> dict:
        return {"kind": "cocycle_counterexample", "marked_word": list(self.marked_word), **self.point.as_dict()}


def _check_lambda(A, marked, lam):
    n = 2 * A.depth + 1
    marked_set = {tuple(a) for a in marked}
    for a in marked:
        ws = lam.get(tuple(a), [])
        if not ws:
            raise ContractViolation(f"Lambda for {tuple(a)} is empty")
        for w in ws:
            w = tuple(w)
            if w[:n] != tuple(a) or w[-n:] not in marked_set:
                raise ContractViolation(f"{w} is not a transition between marked words")
            if not A.sft.is_admissible(w):
                raise ContractViolation(f"{w} is not admissible")


def verify_cocycle_covering(A, region: Region, marked_words, lam, delta: float, rho: float,
                            mesh: Mesh | None = None, cap: int = DEFAULT_MESH_CAP):
    """Family covering for every marked word a with family {A_[w> : w in Lambda_a}."""
    marked = [tuple(a) for a in marked_words]
    lam = {tuple(a): [tuple(w) for w in ws] for a, ws in lam.items()}
    _check_lambda(A, marked, lam)
    if mesh is None:
        mesh = build_mesh(region, rho, cap)
    per = {}
    for a in marked:
        fam = [A.transition_product(w) for w in lam[a]]
        res = verify_family_covering(fam, region, delta, rho, mesh=mesh)
        if isinstance(res, CounterexamplePoint):
            return CocycleCounterexample(a, res)
        per[a] = res
    return CocycleCoveringCertificate(region, marked, lam, min(c.delta for c in per.values()), rho, per, A.depth)


def search_cocycle_covering(A, regions, deltas, rho_fraction: float = 0.8, max_len: int | None = None,
                            cap: int = DEFAULT_MESH_CAP):
    """Try every marked set = all windows, Lambda = all transitions up to max_len.

    Returns the first certificate or a list describing every failed attempt.
    Absence of a certificate is only a statement about the searched grid.
    """
    from .symbolic import enumerate_transitions

    n = 2 * A.depth + 1
    max_len = max_len or 2 * n
    marked = [tuple(w) for w in A.windows]
    lam = {a: [w for b in marked for w in enumerate_transitions(A.sft, a, b, max_len) if len(w) > n]
           for a in marked}
    attempts = []
    for U in regions:
        for delta in deltas:
            L = max(family_lipschitz([A.transition_product(w) for w in ws]) for ws in lam.values())
            rho = rho_fraction * delta / L
            try:
                res = verify_cocycle_covering(A, U, marked, lam, delta, rho, cap=cap)
            except (MeshTooLarge, EmptyResult, SlackExhausted) as exc:
                attempts.append({"region": repr(U), "delta": delta, "error": type(exc).__name__})
                continue
            if isinstance(res, CocycleCoveringCertificate):
                return res, attempts
            attempts.append({"region": repr(U), "delta": delta, "margin": res.point.best_margin})
    return None, attempts


# ---------------------------------------------------------------------------
# immediate covering


@dataclass
class ImmediateCertificate:
    """Single-generator covering of V built from witness chains.

    ``links[j] = (generator, target)`` says generator maps ball j into ball
    ``target`` of V; target -1 means it lands in the original region U.
    """

    region: Region
    radii_by_step: list[float]
    links: list[tuple[int, int]]
    base: FamilyCertificate
    generators: list[np.ndarray]

    def verify(self) -> bool:
        U = self.base.region
        for j, (g, t) in enumerate(self.links):
            H = self.generators[g]
            c, r = self.region.centers[j], self.region.radii[j]
            img = H @ c
            spread = mk.operator_norm(H) * r
            if t < 0:
                if not (U.depth_many(img[None])[0] - spread > 0):
                    return False
            else:
                if not (mk.operator_norm(img - self.region.centers[t]) + spread < self.region.radii[t]):
                    return False
        return True


def _word_product(gens, word) -> np.ndarray:
    P = np.eye(gens[0].shape[0])
    for i in word:
        P = gens[i] @ P
    return P


def immediate_covering(generators, U: Region, max_word_len: int, delta: float, rho: float,
                       max_balls: int = 200_000) -> tuple[Region, ImmediateCertificate]:
    """Region V whose closure is covered by single generators.

    Words of length <= max_word_len must cover U with margin delta on a
    rho-mesh.  For each mesh point u with witness word i_1..i_k the chain
    u_j = H_{i_j} ... H_{i_1} u gets balls of radius eps_j, where
    rho < eps_0 < ... < eps_N < delta/2 and L eps_j < eps_{j+1}.
    """
    gens = [np.asarray(H, dtype=float) for H in generators]
    L = family_lipschitz(gens)
    N = max_word_len
    theta = max(L, 1.0) * (1 + 1e-3)
    eps0 = 0.5 * delta * (1 - 1e-6) / theta**N
    if eps0 <= rho:
        raise SlackExhausted("chain radii leave no room above the mesh fineness",
                             eps0=eps0, rho=rho, lipschitz=L)
    eps = [eps0 * theta**j for j in range(N + 1)]
    words = [w for k in range(1, N + 1) for w in itertools.product(range(len(gens)), repeat=k)]
    prods = [_word_product(gens, w) for w in words]
    Lw = family_lipschitz(prods)
    if delta <= Lw * rho:
        raise SlackExhausted("delta must exceed L*rho for the word family", delta=delta, lipschitz=Lw)
    base = verify_family_covering(prods, U, delta, rho)
    if isinstance(base, CounterexamplePoint):
        raise SlackExhausted("words up to the given length do not cover U", margin=base.best_margin)
    pts = base.mesh.points
    centers, radii, links = [], [], []
    for u, wi in zip(pts, base.witnesses):
        w = words[int(wi)]
        cur = u
        for j, g in enumerate(w):
            centers.append(cur)
            radii.append(eps[j])
            nxt = gens[g] @ cur
            links.append((g, len(centers) if j + 1 < len(w) else -1))
            cur = nxt
        if len(centers) > max_balls:
            raise MeshTooLarge("chain region exceeds the ball cap", cap=max_balls)
    V = Region([Ball(c, r) for c, r in zip(centers, radii)], U.group)
    cert = ImmediateCertificate(V, eps, links, base, gens)
    return V, cert
