"""Dense matrix primitives: shrinkage, rank-1 projection, norms, QR and least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError, ConvergenceError, NumericalError

RQ_TOL = 1e-10
MAX_SWEEPS = 200


@dataclass(frozen=True)
class Rank1Factors:
    """``sigma * outer(u, v)`` with unit ``u`` and ``v``; the first nonzero entry of ``u`` is positive."""

    sigma: float
    u: np.ndarray
    v: np.ndarray

    def matrix(self) -> np.ndarray:
        return self.sigma * np.outer(self.u, self.v)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])


def _finite(X: np.ndarray, name: str = "X") -> None:
    if not np.all(np.isfinite(X)):
        raise NumericalError(f"{name} contains non-finite entries")


def soft_threshold(X: np.ndarray, zeta: float) -> np.ndarray:
    """Elementwise shrinkage ``sign(x) * max(|x| - zeta, 0)``."""
    if zeta < 0:
        raise ArgumentError(f"threshold must be nonnegative, got {zeta}")
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ArgumentError("soft_threshold input contains non-finite entries")
    return np.sign(X) * np.maximum(np.abs(X) - zeta, 0.0)


def _fix_sign(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = np.flatnonzero(u)
    if nz.size and u[nz[0]] < 0:
        return -u, -v
    return u, v


def rank1_project(X: np.ndarray, tol: float = RQ_TOL, max_sweeps: int = MAX_SWEEPS,
                  exact_fallback: bool = True) -> Rank1Factors:
    """Best Frobenius rank-1 approximation by power iteration on ``X^T X``.

    The start vector is the column of largest norm. Iteration stops when the
    Rayleigh quotient changes by less than ``tol`` relatively. If ``max_sweeps``
    runs out (nearly tied top singular values), the dominant eigenvector of the
    smaller Gram matrix is computed exactly instead; with ``exact_fallback=False``
    a ConvergenceError carrying the last iterate is raised. A zero input gives
    ``sigma = 0`` with ``u = e_1`` and ``v = e_1``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ArgumentError("rank1_project expects a 2-D matrix")
    _finite(X)
    m, n = X.shape
    colsq = np.einsum("ij,ij->j", X, X)
    j = int(np.argmax(colsq))
    if colsq[j] == 0.0:
        u = np.zeros(m)
        u[0] = 1.0
        v = np.zeros(n)
        v[0] = 1.0
        return Rank1Factors(0.0, u, v)
    v = X.T @ X[:, j]
    v /= np.linalg.norm(v)
    rq = 0.0
    for _ in range(max_sweeps):
        w = X @ v
        s2 = float(w @ w)
        v = X.T @ w
        nv = np.linalg.norm(v)
        if nv == 0.0 or not np.isfinite(nv):
            raise NumericalError("power iteration collapsed")
        v /= nv
        if abs(s2 - rq) <= tol * s2:
            break
        rq = s2
    else:
        if exact_fallback:
            v = _dominant_right_vector(X)
        else:
            w = X @ v
            sigma = float(np.linalg.norm(w))
            u, vv = _fix_sign(w / sigma, v)
            raise ConvergenceError("power iteration did not converge",
                                   last=Rank1Factors(sigma, u, vv), iteration=max_sweeps)
    w = X @ v
    sigma = float(np.linalg.norm(w))
    u, v = _fix_sign(w / sigma, v)
    return Rank1Factors(sigma, u, v)


def _dominant_right_vector(X: np.ndarray) -> np.ndarray:
    m, n = X.shape
    if n <= m:
        return np.linalg.eigh(X.T @ X)[1][:, -1]
    u = np.linalg.eigh(X @ X.T)[1][:, -1]
    v = X.T @ u
    return v / np.linalg.norm(v)


def spectral_norm(X: np.ndarray) -> float:
    """Largest singular value of ``X``."""
    X = np.asarray(X, dtype=float)
    _finite(X)
    # the Gram matrix on the short side keeps the eigen solve tiny
    G = X.T @ X if X.shape[0] >= X.shape[1] else X @ X.T
    return float(np.sqrt(max(np.linalg.eigvalsh(G)[-1], 0.0)))


@dataclass(frozen=True)
class QRResult:
    Q: np.ndarray
    R: np.ndarray
    deficient: tuple[int, ...]  # columns whose R diagonal fell below 1e-12

    def __iter__(self):
        return iter((self.Q, self.R))


def thin_qr(J: np.ndarray) -> QRResult:
    """Thin QR with a nonnegative R diagonal; near-zero pivots are reported."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] < J.shape[1]:
        raise ArgumentError("thin_qr expects an m x d matrix with m >= d")
    _finite(J, "J")
    Q, R = np.linalg.qr(J, mode="reduced")
    s = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * s
    R = R * s[:, None]
    deficient = tuple(int(i) for i in np.flatnonzero(np.abs(np.diag(R)) < 1e-12))
    return QRResult(Q, R, deficient)


def least_squares_apply(J: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Minimum-norm minimizer of ``||J x - r||``."""
    J = np.asarray(J, dtype=float)
    r = np.asarray(r, dtype=float)
    if J.ndim != 2 or r.shape != (J.shape[0],):
        raise ArgumentError("shape mismatch between J and r")
    return np.linalg.lstsq(J, r, rcond=None)[0]


def pseudo_inverse(J: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse; batched over leading axes."""
    return np.linalg.pinv(np.asarray(J, dtype=float))
