"""Dense matrix kernel: norms, spectra, hyperbolicity and near-identity factorizations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DimensionTooSmall, NegativeDeterminant, Singular


@dataclass(frozen=True)
class ToleranceConfig:
    spectral_tol: float = 1e-9
    equality_tol: float = 1e-10
    det_tol: float = 1e-9

    def __post_init__(self):
        if min(self.spectral_tol, self.equality_tol, self.det_tol) <= 0:
            raise ValueError("tolerances must be positive")


DEFAULT_TOL = ToleranceConfig()


def identity(d: int) -> np.ndarray:
    return np.eye(d)


def operator_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.shape == (2, 2):
        return float(norm2x2(M[None])[0])
    return float(np.linalg.norm(M, 2))


def norm2x2(Ms: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of 2x2 matrices in closed form."""
    a, b, c, d = Ms[..., 0, 0], Ms[..., 0, 1], Ms[..., 1, 0], Ms[..., 1, 1]
    return 0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c))


def batch_norm(Ms: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of square matrices of shape (..., d, d)."""
    Ms = np.asarray(Ms, dtype=float)
    if Ms.shape[-1] == 2:
        return norm2x2(Ms)
    if Ms.shape[-1] == 1:
        return np.abs(Ms[..., 0, 0])
    return np.linalg.norm(Ms, ord=2, axis=(-2, -1))


def batch_logm(Ms: np.ndarray, max_roots: int = 40) -> np.ndarray:
    """Principal logarithms of a stack of matrices by inverse scaling and squaring.

    Each matrix is square-rooted (Denman-Beavers) until it is within 0.25 of Id
    in Frobenius norm, then log Y = 2 atanh((Y - I)(Y + I)^{-1}) is summed.
    Entries that do not settle (eigenvalues on the closed negative axis) are NaN.
    """
    Y = np.array(Ms, dtype=float)
    n, d = Y.shape[0], Y.shape[-1]
    I = np.eye(d)
    lam = np.linalg.eigvals(Y)
    off_axis = ~np.any((np.abs(lam.imag) <= 1e-12 * (1 + np.abs(lam))) & (lam.real <= 0), axis=-1)
    Y[~off_axis] = I
    roots = np.zeros(n)
    active = np.linalg.norm(Y - I, axis=(-2, -1)) > 0.25
    for _ in range(max_roots):
        if not active.any():
            break
        A = Y[active]
        Z = np.broadcast_to(I, A.shape).copy()
        with np.errstate(all="ignore"):
            for _ in range(60):
                A, Z = 0.5 * (A + np.linalg.inv(Z)), 0.5 * (Z + np.linalg.inv(A))
                if np.all(np.linalg.norm(A @ A - Y[active], axis=(-2, -1)) <= 1e-13 * (1 + np.linalg.norm(Y[active], axis=(-2, -1)))):
                    break
        Y[active] = A
        roots[active] += 1
        active = np.linalg.norm(Y - I, axis=(-2, -1)) > 0.25
    with np.errstate(all="ignore"):
        W = np.linalg.solve(Y + I, Y - I)
    W2 = W @ W
    term, out = W.copy(), W.copy()
    for k in range(1, 14):
        term = term @ W2
        out += term / (2 * k + 1)
    out *= (2.0 * 2.0 ** roots)[:, None, None]
    bad = active | ~off_axis | ~np.all(np.isfinite(out), axis=(-2, -1))
    out[bad] = np.nan
    return out


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)


def eigenvalues(M) -> np.ndarray:
    return np.linalg.eigvals(np.asarray(M, dtype=float))


def _singular(M: np.ndarray, tol: ToleranceConfig) -> bool:
    if not np.all(np.isfinite(M)):
        return True
    # relative test; an absolute det threshold would reject tiny GL scalings
    return bool(np.linalg.cond(M) > 1e13)


def inverse(M, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if _singular(M, tol):
        raise Singular("matrix is not invertible within tolerance", det=float(np.linalg.det(M)))
    return np.linalg.inv(M)


def hyperbolicity_witness(M) -> float:
    """Product over all ordered eigenvalue pairs of (lambda_i lambda_j - 1)."""
    lam = eigenvalues(M)
    prod = np.prod(np.outer(lam, lam) - 1.0)
    return float(np.real(prod))


def is_hyperbolic(M, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    mods = np.abs(eigenvalues(M))
    return bool(np.all(np.abs(mods - 1.0) > tol.spectral_tol))


def unimodular_renormalize(M, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    det = np.linalg.det(M)
    if _singular(M, tol):
        raise Singular("cannot renormalize a singular matrix", det=float(det))
    return M * abs(det) ** (-1.0 / M.shape[0])


def _log_orthogonal(Q: np.ndarray) -> np.ndarray:
    """Real skew logarithm of a special orthogonal matrix.

    The real Schur form of an orthogonal matrix is block diagonal with 2x2
    rotations and +-1 entries; pairs of -1 entries are read as half turns.
    """
    d = Q.shape[0]
    T, Z = sla.schur(Q, output="real")
    L = np.zeros((d, d))
    minus = []
    i = 0
    while i < d:
        if i + 1 < d and abs(T[i + 1, i]) > 1e-14:
            c = 0.5 * (T[i, i] + T[i + 1, i + 1])
            s = 0.5 * (T[i + 1, i] - T[i, i + 1])
            th = math.atan2(s, c)
            L[i + 1, i], L[i, i + 1] = th, -th
            i += 2
        else:
            if T[i, i] < 0:
                minus.append(i)
            i += 1
    if len(minus) % 2:
        raise NegativeDeterminant("orthogonal factor has determinant -1")
    for p, q in zip(minus[::2], minus[1::2]):
        L[q, p], L[p, q] = math.pi, -math.pi
    K = Z @ L @ Z.T
    return 0.5 * (K - K.T)


def polar_log_factorization(M, tol: ToleranceConfig = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Return (K, S), K skew and S symmetric, with M = exp(K) exp(S)."""
    M = np.asarray(M, dtype=float)
    if np.linalg.det(M) <= 0:
        raise NegativeDeterminant("polar logarithm needs det > 0", det=float(np.linalg.det(M)))
    Q, P = sla.polar(M, side="right")
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    S = (V * np.log(w)) @ V.T
    S = 0.5 * (S + S.T)
    K = _log_orthogonal(Q)
    return K, S


def _stage_count(X: np.ndarray, eps: float, cap: int) -> int:
    if not np.any(X):
        return 0
    n = 1
    while operator_norm(sla.expm(X / n) - np.eye(X.shape[0])) >= eps:
        n += 1
        if n > cap:
            from .errors import FragmentationBudget

            raise FragmentationBudget("fragment count exceeds cap", cap=cap)
    return n


def fragment(M, eps: float, cap: int = 100000, tol: ToleranceConfig = DEFAULT_TOL) -> list[np.ndarray]:
    """Near-identity factors F_1, ..., F_n with F_n ... F_1 = M.

    A matrix already within ``eps`` of the identity is its own single factor.
    Otherwise the factors walk the polar path: the symmetric stage exp(S/n_S)
    is applied first, then the rotation stage exp(K/n_K).
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if eps <= 0:
        raise ValueError("eps must be positive")
    if np.linalg.det(M) <= 0:
        raise NegativeDeterminant("fragmentation needs det > 0", det=float(np.linalg.det(M)))
    if operator_norm(M - np.eye(d)) < eps:
        return [M.copy()]
    K, S = polar_log_factorization(M, tol)
    nS = _stage_count(S, eps, cap)
    nK = _stage_count(K, eps, cap)
    out = []
    if nS:
        out += [sla.expm(S / nS)] * nS
    if nK:
        out += [sla.expm(K / nK)] * nK
    return [f.copy() for f in out] or [np.eye(d)]


def compose(factors) -> np.ndarray:
    """F_n ... F_1 for factors listed in application order."""
    P = np.eye(np.asarray(factors[0]).shape[0])
    for F in factors:
        P = F @ P
    return P


def _block_structure(T: np.ndarray) -> list[tuple[int, int]]:
    d = T.shape[0]
    blocks = []
    i = 0
    while i < d:
        if i + 1 < d and abs(T[i + 1, i]) > 1e-13 * max(1.0, abs(T).max()):
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def hyperbolizing_curve(H, t: float, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Matrix H_t with H_0 = Id, det H_t = 1 and H H_t hyperbolic for t > 0.

    Writes H = O U O^T in real Schur form and returns O D_t O^T with D_t
    constant on each diagonal block of U.  Blocks whose eigenvalues sit on the
    unit circle get a nonzero exponent; other blocks get an exponent whose sign
    only pushes them further from the circle; exponents balance to det 1.
    """
    H = np.asarray(H, dtype=float)
    d = H.shape[0]
    if d <= 2:
        raise DimensionTooSmall("hyperbolizing curve needs d > 2", d=d)
    U, O = sla.schur(H, output="real")
    blocks = _block_structure(U)
    kinds = []
    for i, n in blocks:
        mod = abs(np.linalg.eigvals(U[i:i + n, i:i + n])[0])
        if abs(mod - 1.0) <= max(tol.spectral_tol, 1e-7):
            kinds.append(0)
        else:
            kinds.append(1 if mod > 1 else -1)
    expo = _balanced_exponents(blocks, kinds)
    diag = np.concatenate([[math.exp(t * s)] * n for (_, n), s in zip(blocks, expo)])
    return (O * diag) @ O.T


def _balanced_exponents(blocks, kinds) -> list[float]:
    sizes = [n for _, n in blocks]
    neutral = [b for b, k in enumerate(kinds) if k == 0]
    if not neutral:
        return [0.0] * len(blocks)
    for pattern in range(2 ** len(neutral)):
        signs = {b: (1 if not (pattern >> j) & 1 else -1) for j, b in enumerate(neutral)}
        pos = [b for b in neutral if signs[b] > 0]
        neg = [b for b in neutral if signs[b] < 0]
        # blocks off the circle may absorb mass in the direction they already lean
        pos_pool = pos or [b for b, k in enumerate(kinds) if k > 0]
        neg_pool = neg or [b for b, k in enumerate(kinds) if k < 0]
        if not pos_pool or not neg_pool:
            continue
        expo = [0.0] * len(blocks)
        for b in pos_pool:
            expo[b] = 1.0 / (len(pos_pool) * sizes[b])
        for b in neg_pool:
            expo[b] = -1.0 / (len(neg_pool) * sizes[b])
        return expo
    raise DimensionTooSmall("no balanced exponent assignment exists")


def haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    Z = rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_sl(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """exp of a random trace-free matrix; lands in SL(d) exactly up to rounding."""
    X = rng.normal(size=(d, d)) * scale
    X -= np.trace(X) / d * np.eye(d)
    return sla.expm(X)


def rotation_to(v: np.ndarray) -> np.ndarray:
    """A special orthogonal matrix sending e_1 to v/|v|.

    Householder reflection composed with a sign flip to keep det = +1.
    """
    v = np.asarray(v, dtype=float)
    d = v.shape[0]
    u = v / np.linalg.norm(v)
    e = np.zeros(d)
    e[0] = 1.0
    w = u - e
    if np.linalg.norm(w) < 1e-15:
        return np.eye(d)
    Hh = np.eye(d) - 2.0 * np.outer(w, w) / (w @ w)
    # Hh e1 = u and det Hh = -1; flip a column orthogonal to e1 to restore det 1
    Hh[:, 1] = -Hh[:, 1]
    return Hh


def format_float(x: float) -> str:
    return repr(float(x))


def matrix_to_list(M) -> list[float]:
    return [float(v) for v in np.asarray(M, dtype=float).ravel()]


def matrix_from_list(vals, d: int) -> np.ndarray:
    arr = np.array([float(v) for v in vals], dtype=float)
    if arr.size != d * d:
        from .errors import ShapeMismatch

        raise ShapeMismatch(f"expected {d * d} entries, got {arr.size}")
    return arr.reshape(d, d)
