"""Coarse initialization: dense descriptors, HMRF belief propagation and EM homography fitting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .exceptions import ArgumentError, DegenerateTransformError, NumericalError
from .geometry import PIXEL_FRAME, NormalizationTransform, coordinate_jacobian, map_points, matrix_to_params, params_to_matrix
from .metrics import transform_distance

N_BINS = 8
N_SUB = 4
SUB = 4
HALF = N_SUB * SUB // 2


# ---------------------------------------------------------------------------
# descriptors


def dense_descriptor(image: np.ndarray) -> np.ndarray:
    """128-D orientation-histogram descriptor at every pixel, shape ``(h, w, 128)``.

    Gradient magnitudes are hard-binned into 8 orientations and summed over a
    4x4 grid of 4x4-pixel subpatches spanning rows/columns ``p-8 .. p+7``.
    Each vector is unit-normalized, clamped at 0.2 and renormalized.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or min(img.shape) < 16:
        raise ArgumentError("descriptors need a 2-D image of at least 16x16")
    h, w = img.shape
    pad = HALF + 1
    P = np.pad(img, pad, mode="reflect")
    gx = np.zeros_like(P)
    gy = np.zeros_like(P)
    gx[:, 1:-1] = (P[:, 2:] - P[:, :-2]) / 2
    gy[1:-1, :] = (P[2:, :] - P[:-2, :]) / 2
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    bins = np.floor(ang / (2 * np.pi / N_BINS)).astype(np.int64) % N_BINS
    desc = np.zeros((h, w, N_SUB, N_SUB, N_BINS))
    for b in range(N_BINS):
        M = np.where(bins == b, mag, 0.0)
        I = np.zeros((M.shape[0] + 1, M.shape[1] + 1))
        I[1:, 1:] = M.cumsum(0).cumsum(1)
        for a in range(N_SUB):
            r0 = pad - HALF + SUB * a
            for c in range(N_SUB):
                c0 = pad - HALF + SUB * c
                desc[:, :, a, c, b] = (I[r0 + SUB:r0 + SUB + h, c0 + SUB:c0 + SUB + w] - I[r0:r0 + h, c0 + SUB:c0 + SUB + w]
                                       - I[r0 + SUB:r0 + SUB + h, c0:c0 + w] + I[r0:r0 + h, c0:c0 + w])
    # integral-image differences can leave tiny negative round-off
    desc = np.maximum(desc.reshape(h, w, -1), 0.0)
    return _normalize(_normalize(desc).clip(max=0.2))


def _normalize(d: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    return np.where(n > 1e-12, d / np.where(n > 1e-12, n, 1.0), 0.0)


# ---------------------------------------------------------------------------
# belief propagation


@dataclass(frozen=True)
class HMRFParams:
    kappa: float = 8.0
    eta: float = 1e-3
    alpha: float = 1.0
    L: int | None = None  # None: one eighth of the image width
    temperature: float = 1.0
    alternations: int = 2
    bp_iterations: int | None = None

    def __post_init__(self):
        if not (self.kappa > 0 and self.eta > 0 and self.alpha > 0 and self.temperature > 0):
            raise ArgumentError("HMRF weights must be positive")
        if self.L is not None and self.L < 1:
            raise ArgumentError("L must be at least 1")

    @property
    def labels(self) -> np.ndarray:
        if self.L is None:
            raise ArgumentError("label range is unresolved; set L")
        return np.arange(-self.L, self.L + 1)


@dataclass
class MotionFieldMarginals:
    omega_u: np.ndarray  # (h, w, 2L+1)
    omega_v: np.ndarray
    labels: np.ndarray


@njit(cache=True)
def _dt_quadratic(f, alpha, out):
    """out[l] = min_k f[k] + alpha (l - k)^2 via the lower envelope of parabolas."""
    n = f.shape[0]
    v = np.empty(n, np.int64)
    z = np.empty(n + 1)
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] / alpha + q * q) - (f[v[k]] / alpha + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] / alpha + q * q) - (f[v[k]] / alpha + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d = q - v[k]
        out[q] = alpha * d * d + f[v[k]]


@njit(cache=True)
def _send(h, alpha, out):
    """Messages for every pixel: distance transform of h, shifted to min zero."""
    H, W, K = h.shape
    buf = np.empty(K)
    for i in range(H):
        for j in range(W):
            _dt_quadratic(h[i, j], alpha, buf)
            m = buf.min()
            for k in range(K):
                out[i, j, k] = buf[k] - m


def _min_sum(unary: np.ndarray, alpha: float, iterations: int) -> np.ndarray:
    """Min-sum beliefs on a 4-connected grid with pairwise ``alpha (l - l')^2``."""
    H, W, K = unary.shape
    left = np.zeros_like(unary)   # message arriving from the left neighbour
    right = np.zeros_like(unary)
    up = np.zeros_like(unary)
    down = np.zeros_like(unary)
    tmp = np.empty_like(unary)
    for _ in range(iterations):
        total = unary + left + right + up + down
        nl, nr, nu, nd = (np.zeros_like(unary) for _ in range(4))
        if W > 1:
            _send(np.ascontiguousarray(total - right), alpha, tmp)
            nl[:, 1:] = tmp[:, :-1]
            _send(np.ascontiguousarray(total - left), alpha, tmp)
            nr[:, :-1] = tmp[:, 1:]
        if H > 1:
            _send(np.ascontiguousarray(total - down), alpha, tmp)
            nu[1:] = tmp[:-1]
            _send(np.ascontiguousarray(total - up), alpha, tmp)
            nd[:-1] = tmp[1:]
        left, right, up, down = nl, nr, nu, nd
        if not np.all(np.isfinite(left + right + up + down)):
            raise NumericalError("belief propagation messages diverged")
    return unary + left + right + up + down


def grid_beliefs(unary: np.ndarray, alpha: float, iterations: int | None = None) -> np.ndarray:
    """Min-sum beliefs for unary costs ``(H, W, K)``; defaults to ``H + W`` flooding rounds."""
    unary = np.asarray(unary, dtype=float)
    H, W, _ = unary.shape
    it = min(H + W, 100) if iterations is None else iterations
    return _min_sum(unary, alpha, max(it, 1))


def softmin(beliefs: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    b = beliefs - beliefs.min(axis=-1, keepdims=True)
    e = np.exp(-b / temperature)
    return e / e.sum(axis=-1, keepdims=True)


def _resolve(params: HMRFParams | None, width: int) -> HMRFParams:
    params = params or HMRFParams()
    return replace(params, L=max(1, width // 8)) if params.L is None else params


def _displacement(tau, h: int, w: int, frame: NormalizationTransform):
    X, Y = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    d = map_points(tau, pts, frame) - pts
    return d[:, 0].reshape(h, w), d[:, 1].reshape(h, w)


def _data_cost(s1, s2, du: np.ndarray, dv: np.ndarray, kappa: float) -> np.ndarray:
    """``min(||s1(p) - s2(p + (du, dv))||_1, kappa)`` for integer offset fields; outside costs kappa."""
    h, w, _ = s1.shape
    Y, X = np.mgrid[0:h, 0:w]
    x, y = X + du, Y + dv
    ok = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    cost = np.full((h, w), kappa)
    cost[ok] = np.minimum(np.abs(s1[ok] - s2[y[ok], x[ok]]).sum(axis=-1), kappa)
    return cost


def bp_marginals(s1: np.ndarray, s2: np.ndarray, tau, params: HMRFParams = HMRFParams(),
                 frame: NormalizationTransform = PIXEL_FRAME) -> MotionFieldMarginals:
    """Per-pixel label marginals of the horizontal and vertical motion.

    ``tau`` maps image-1 coordinates toward image 2; its displacement field
    anchors the fidelity term. The data term couples the axes, so the
    passes alternate, holding the other axis at its current best label.
    """
    if s1.shape != s2.shape:
        raise ArgumentError("descriptor fields differ in shape")
    h, w, _ = s1.shape
    params = _resolve(params, w)
    labels = params.labels
    tu, tv = _displacement(tau, h, w, frame)
    fid_u = params.eta * np.abs(tu[..., None] - labels)
    fid_v = params.eta * np.abs(tv[..., None] - labels)
    v_hat = np.clip(np.rint(tv), -params.L, params.L).astype(np.int64)
    bu = bv = None
    for _ in range(params.alternations):
        cu = np.stack([_data_cost(s1, s2, np.full((h, w), l), v_hat, params.kappa) for l in labels], axis=-1)
        bu = grid_beliefs(cu + fid_u, params.alpha, params.bp_iterations)
        u_hat = labels[np.argmin(bu, axis=-1)]
        cv = np.stack([_data_cost(s1, s2, u_hat, np.full((h, w), l), params.kappa) for l in labels], axis=-1)
        bv = grid_beliefs(cv + fid_v, params.alpha, params.bp_iterations)
        v_hat = labels[np.argmin(bv, axis=-1)]
    return MotionFieldMarginals(softmin(bu, params.temperature), softmin(bv, params.temperature), labels)


# ---------------------------------------------------------------------------
# M-step


def weighted_l1_objective(tau, marginals: MotionFieldMarginals, frame: NormalizationTransform = PIXEL_FRAME) -> float:
    h, w, _ = marginals.omega_u.shape
    tu, tv = _displacement(tau, h, w, frame)
    lab = marginals.labels
    return float(np.sum(marginals.omega_u * np.abs(tu[..., None] - lab))
                 + np.sum(marginals.omega_v * np.abs(tv[..., None] - lab)))


def fit_homography_weighted(marginals: MotionFieldMarginals, tau_init, frame: NormalizationTransform = PIXEL_FRAME,
                            sweeps: int = 20, rtol: float = 1e-8, eps: float = 1e-9) -> np.ndarray:
    """Weighted least-absolute-deviation homography fit by IRLS with Gauss-Newton steps.

    A backtracking step keeps the objective from increasing.
    """
    h, w, _ = marginals.omega_u.shape
    lab = marginals.labels.astype(float)
    X, Y = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    pn = frame.to_normalized(pts)
    wu = marginals.omega_u.reshape(-1, lab.size)
    wv = marginals.omega_v.reshape(-1, lab.size)
    tau = np.asarray(tau_init, dtype=float).copy()
    obj = weighted_l1_objective(tau, marginals, frame)
    warned = False
    for _ in range(sweeps):
        d = map_points(tau, pts, frame) - pts
        Jc = coordinate_jacobian(tau, pn) / frame.scale
        A = np.zeros((8, 8))
        b = np.zeros(8)
        for axis, om in ((0, wu), (1, wv)):
            r = d[:, axis, None] - lab
            W = om / np.maximum(np.abs(r), eps)
            sw = W.sum(axis=1)
            Ja = Jc[:, axis, :]
            A += (Ja * sw[:, None]).T @ Ja
            b -= Ja.T @ (W * r).sum(axis=1)
        try:
            np.linalg.cholesky(A)
            step = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            if not warned:
                warnings.warn("IRLS normal matrix is singular; adding a 1e-8 ridge", RuntimeWarning, stacklevel=2)
                warned = True
            step = np.linalg.solve(A + 1e-8 * np.eye(8), b)
        t = 1.0
        accepted = False
        for _ in range(30):
            cand = tau + t * step
            try:
                new = weighted_l1_objective(cand, marginals, frame)
            except NumericalError:
                new = np.inf
            if new <= obj:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        change = obj - new
        tau, obj = cand, new
        if change <= rtol * max(obj, 1e-300):
            break
    return tau


# ---------------------------------------------------------------------------
# EM and chaining


def em_initialize(image1: np.ndarray, image2: np.ndarray, params: HMRFParams | None = None,
                  epsilon: float = 1e-3, frame: NormalizationTransform = PIXEL_FRAME,
                  max_rounds: int = 30) -> np.ndarray:
    """Homography taking image-1 coordinates to image-2 coordinates, starting from identity.

    An unset ``params.L`` defaults to one eighth of the image width.
    """
    a = np.asarray(image1, dtype=float)
    b = np.asarray(image2, dtype=float)
    if a.shape != b.shape or min(a.shape) < 32:
        raise ArgumentError("em_initialize needs two equally sized images of at least 32x32")
    h, w = a.shape
    params = _resolve(params, w)
    s1, s2 = dense_descriptor(a), dense_descriptor(b)
    tau = np.zeros(8)
    for _ in range(max_rounds):
        marg = bp_marginals(s1, s2, tau, params, frame)
        new = fit_homography_weighted(marg, tau, frame)
        change = transform_distance(new, tau, h, w, frame)
        tau = new
        if change < epsilon:
            return tau
    warnings.warn("EM initialization did not converge; returning the last iterate", RuntimeWarning, stacklevel=2)
    return tau


def chain_pairwise(pairwise_taus, reference: int = 0) -> np.ndarray:
    """Compose consecutive pair transforms into per-image transforms from the reference frame.

    ``pairwise_taus[k]`` maps image ``k`` coordinates to image ``k + 1``
    coordinates; the result row ``j`` maps reference coordinates to image ``j``.
    """
    Hs = [params_to_matrix(t) for t in pairwise_taus]
    n = len(Hs) + 1
    if not 0 <= reference < n:
        raise ArgumentError(f"reference index {reference} out of range")
    out = np.zeros((n, 8))
    for j in range(n):
        M = np.eye(3)
        if j > reference:
            for k in range(reference, j):
                M = Hs[k] @ M
        elif j < reference:
            for k in range(reference - 1, j - 1, -1):
                M = np.linalg.inv(Hs[k]) @ M
        if abs(M[2, 2]) < 1e-10:
            raise DegenerateTransformError(f"chained transform of image {j} is degenerate")
        out[j] = matrix_to_params(M)
    return out
