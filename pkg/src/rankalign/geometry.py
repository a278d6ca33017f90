"""Homography parametrization, warping with validity masks, and Jacobians.

A transform is an 8-vector ``tau`` of deviations from the identity homography
in a normalized coordinate frame::

    H = [[1 + t0, t1,     t2],
         [t3,     1 + t4, t5],
         [t6,     t7,     1 ]]

``tau`` maps canvas (reference-frame) coordinates to source-image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ArgumentError, DegenerateTransformError, PointAtInfinityError

D = 8
DENOM_TOL = 1e-10
DET_TOL = 1e-8
EDGE_SLACK = 1e-9


def identity_params(n: int | None = None) -> np.ndarray:
    return np.zeros(D) if n is None else np.zeros((n, D))


def params_to_matrix(tau: np.ndarray) -> np.ndarray:
    t = np.asarray(tau, dtype=float)
    H = np.empty(t.shape[:-1] + (3, 3))
    H[..., 0, 0] = 1.0 + t[..., 0]
    H[..., 0, 1] = t[..., 1]
    H[..., 0, 2] = t[..., 2]
    H[..., 1, 0] = t[..., 3]
    H[..., 1, 1] = 1.0 + t[..., 4]
    H[..., 1, 2] = t[..., 5]
    H[..., 2, 0] = t[..., 6]
    H[..., 2, 1] = t[..., 7]
    H[..., 2, 2] = 1.0
    return H


def matrix_to_params(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if abs(H[2, 2]) < DENOM_TOL:
        raise DegenerateTransformError("homography has vanishing bottom-right entry")
    H = H / H[2, 2]
    return np.array([H[0, 0] - 1.0, H[0, 1], H[0, 2], H[1, 0], H[1, 1] - 1.0, H[1, 2], H[2, 0], H[2, 1]])


def check_invertible(tau: np.ndarray, label: str = "transform") -> None:
    dets = np.atleast_1d(np.linalg.det(params_to_matrix(tau)))
    bad = np.flatnonzero(~(np.abs(dets) > DET_TOL))
    if bad.size:
        raise DegenerateTransformError(f"{label} is singular (cell {int(bad[0])})")


@dataclass(frozen=True)
class NormalizationTransform:
    """Isotropic similarity taking pixel coordinates to the normalized frame."""

    scale: float
    offset: tuple[float, float]

    def matrix(self) -> np.ndarray:
        s = self.scale
        ox, oy = self.offset
        return np.array([[s, 0.0, -s * ox], [0.0, s, -s * oy], [0.0, 0.0, 1.0]])

    def to_normalized(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - np.asarray(self.offset)) * self.scale

    def to_pixels(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=float) / self.scale + np.asarray(self.offset)

    def rescaled(self, factor: float) -> "NormalizationTransform":
        """Frame for pixel coordinates multiplied by ``factor`` (pyramid level change)."""
        return NormalizationTransform(self.scale / factor, (self.offset[0] * factor, self.offset[1] * factor))


PIXEL_FRAME = NormalizationTransform(1.0, (0.0, 0.0))


def normalization_for(width: int, height: int) -> NormalizationTransform:
    """Centroid to the origin, corners at RMS distance sqrt(2)."""
    if width < 2 or height < 2:
        raise ArgumentError("normalization needs a domain of at least 2x2 pixels")
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    # all four corners are equidistant from the centroid
    r = np.hypot(cx, cy)
    return NormalizationTransform(float(np.sqrt(2.0) / r), (cx, cy))


def _dehomogenize(tau: np.ndarray, pts: np.ndarray):
    t = np.asarray(tau, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    den = t[..., 6] * x + t[..., 7] * y + 1.0
    bad = np.abs(den) < DENOM_TOL
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise PointAtInfinityError(f"point {tuple(int(i) for i in idx)} maps to infinity")
    nx = (1.0 + t[..., 0]) * x + t[..., 1] * y + t[..., 2]
    ny = t[..., 3] * x + (1.0 + t[..., 4]) * y + t[..., 5]
    return nx / den, ny / den, den


def apply_homography(tau: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Map point(s) ``p`` (``(..., 2)``) through ``tau``; ``tau`` may broadcast per point."""
    p = np.asarray(p, dtype=float)
    tx, ty, _ = _dehomogenize(tau, p)
    return np.stack([tx, ty], axis=-1)


def coordinate_jacobian(tau: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Derivative of ``t(p; tau)`` with respect to the 8 parameters, shape ``(..., 2, 8)``."""
    p = np.asarray(p, dtype=float)
    tx, ty, den = _dehomogenize(tau, p)
    x, y = p[..., 0] / den, p[..., 1] / den
    one = 1.0 / den
    zero = np.zeros_like(x)
    rx = [x, y, one, zero, zero, zero, -x * tx, -y * tx]
    ry = [zero, zero, zero, x, y, one, -x * ty, -y * ty]
    return np.stack([np.stack(rx, axis=-1), np.stack(ry, axis=-1)], axis=-2)


def compose(tau_outer: np.ndarray, tau_inner: np.ndarray) -> np.ndarray:
    """Parameters of ``t(t(p; inner); outer)``."""
    return matrix_to_params(params_to_matrix(tau_outer) @ params_to_matrix(tau_inner))


def invert(tau: np.ndarray) -> np.ndarray:
    check_invertible(tau)
    return matrix_to_params(np.linalg.inv(params_to_matrix(tau)))


def to_pixel_matrix(tau: np.ndarray, frame: NormalizationTransform) -> np.ndarray:
    N = frame.matrix()
    return np.linalg.inv(N) @ params_to_matrix(tau) @ N


def from_pixel_matrix(H: np.ndarray, frame: NormalizationTransform) -> np.ndarray:
    N = frame.matrix()
    return matrix_to_params(N @ H @ np.linalg.inv(N))


def translation_params(dx: float, dy: float, frame: NormalizationTransform = PIXEL_FRAME) -> np.ndarray:
    """Normalized-frame parameters of a pixel translation ``p -> p + (dx, dy)``."""
    tau = np.zeros(D)
    tau[2] = dx * frame.scale
    tau[5] = dy * frame.scale
    return tau


# ---------------------------------------------------------------------------
# cell grids


@dataclass
class CellGrid:
    """``rows x cols`` cells tiling the half-open pixel rectangle ``bounds``.

    ``bounds = (x0, y0, x1, y1)`` lives in reference-frame pixel coordinates;
    ``params`` has one row per cell in row-major order.
    """

    rows: int
    cols: int
    bounds: tuple[float, float, float, float]
    params: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ArgumentError("cell grid needs at least one cell per axis")
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ArgumentError(f"empty cell-grid bounds {self.bounds}")
        if self.params is None:
            self.params = identity_params(self.n_cells)
        self.params = np.asarray(self.params, dtype=float).reshape(self.n_cells, D)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def copy(self, params: np.ndarray | None = None) -> "CellGrid":
        return replace(self, params=(self.params if params is None else params).copy())

    def cell_of(self, pts: np.ndarray) -> np.ndarray:
        """Cell index of each point; points outside the bounds clamp to the nearest cell."""
        pts = np.asarray(pts, dtype=float)
        x0, y0, x1, y1 = self.bounds
        c = np.floor((pts[..., 0] - x0) * self.cols / (x1 - x0)).astype(np.int64)
        r = np.floor((pts[..., 1] - y0) * self.rows / (y1 - y0)).astype(np.int64)
        return np.clip(r, 0, self.rows - 1) * self.cols + np.clip(c, 0, self.cols - 1)

    def cell_rect(self, u: int) -> tuple[float, float, float, float]:
        r, c = divmod(u, self.cols)
        x0, y0, x1, y1 = self.bounds
        w, h = (x1 - x0) / self.cols, (y1 - y0) / self.rows
        return (x0 + c * w, y0 + r * h, x0 + (c + 1) * w, y0 + (r + 1) * h)

    def adjacency(self) -> list[tuple[int, int]]:
        """Unordered neighbouring cell pairs ``(u, v)`` with ``u < v``."""
        pairs = []
        for r in range(self.rows):
            for c in range(self.cols):
                u = r * self.cols + c
                if c + 1 < self.cols:
                    pairs.append((u, u + 1))
                if r + 1 < self.rows:
                    pairs.append((u, u + self.cols))
        return pairs

    def neighbors(self, u: int) -> list[int]:
        return sorted({b if a == u else a for a, b in self.adjacency() if u in (a, b)})

    def grid_pixels(self) -> np.ndarray:
        """Integer pixel centres inside the bounds, shape ``(P, 2)``."""
        x0, y0, x1, y1 = self.bounds
        xs = np.arange(np.ceil(x0), np.ceil(x1))
        ys = np.arange(np.ceil(y0), np.ceil(y1))
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    def cell_pixels(self, u: int) -> np.ndarray:
        pts = self.grid_pixels()
        return pts[self.cell_of(pts) == u]

    def boundary_segment(self, u: int, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of the shared edge of adjacent cells ``u`` and ``v``."""
        a, b = min(u, v), max(u, v)
        ax0, ay0, ax1, ay1 = self.cell_rect(a)
        if b == a + 1 and a // self.cols == b // self.cols:
            return np.array([ax1, ay0]), np.array([ax1, ay1])
        if b == a + self.cols:
            return np.array([ax0, ay1]), np.array([ax1, ay1])
        raise ArgumentError(f"cells {u} and {v} are not adjacent")

    def subdivide(self) -> "CellGrid":
        """Split every cell in four; children inherit the parent parameters."""
        rows, cols = 2 * self.rows, 2 * self.cols
        r, c = np.divmod(np.arange(rows * cols), cols)
        parent = (r // 2) * self.cols + c // 2
        return CellGrid(rows, cols, self.bounds, self.params[parent].copy())


def segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def smoothness_system(grid: CellGrid, sigma: float,
                      frame: NormalizationTransform = PIXEL_FRAME) -> tuple[np.ndarray, np.ndarray]:
    """Normal equations ``Gamma dtau = t`` of the linearized cell-smoothness energy.

    For each adjacent pair the energy sums ``w ||t_u + J_u d_u - t_v - J_v d_v||^2``
    over the pixels of both cells with ``w = exp(-d_B^2 / sigma^2)``, where
    ``d_B`` is the distance to the shared edge; everything is measured in the
    normalized frame.
    """
    if sigma <= 0:
        raise ArgumentError("sigma must be positive")
    C = grid.n_cells
    G = np.zeros((C * D, C * D))
    t = np.zeros(C * D)
    pts = grid.grid_pixels()
    cells = grid.cell_of(pts)
    npts = frame.to_normalized(pts)
    for u, v in grid.adjacency():
        sel = (cells == u) | (cells == v)
        p, q = npts[sel], pts[sel]
        a, b = grid.boundary_segment(u, v)
        dB = segment_distance(q, a, b) * frame.scale
        w = np.exp(-dB ** 2 / sigma ** 2)
        Ju = coordinate_jacobian(grid.params[u], p)
        Jv = coordinate_jacobian(grid.params[v], p)
        diff = apply_homography(grid.params[v], p) - apply_homography(grid.params[u], p)
        su, sv = slice(u * D, (u + 1) * D), slice(v * D, (v + 1) * D)
        G[su, su] += np.einsum("p,pki,pkj->ij", w, Ju, Ju)
        G[sv, sv] += np.einsum("p,pki,pkj->ij", w, Jv, Jv)
        Huv = np.einsum("p,pki,pkj->ij", w, Ju, Jv)
        G[su, sv] -= Huv
        G[sv, su] -= Huv.T
        t[su] += np.einsum("p,pki,pk->i", w, Ju, diff)
        t[sv] -= np.einsum("p,pki,pk->i", w, Jv, diff)
    return G, t


# ---------------------------------------------------------------------------
# warping


@dataclass(frozen=True)
class Canvas:
    """Pixel rectangle in the reference frame: ``origin`` is its top-left pixel centre."""

    origin: tuple[int, int]
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ArgumentError("canvas must be nonempty")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def points(self, pixels: np.ndarray | None = None) -> np.ndarray:
        """Reference-frame coordinates of flat canvas indices (all pixels by default)."""
        if pixels is None:
            pixels = np.arange(self.width * self.height)
        r, c = np.divmod(np.asarray(pixels, dtype=np.int64), self.width)
        return np.stack([c + self.origin[0], r + self.origin[1]], axis=-1).astype(float)


@dataclass
class WarpedImage:
    intensities: np.ndarray
    mask: np.ndarray


def _per_point_params(transform, pts: np.ndarray) -> np.ndarray:
    if isinstance(transform, CellGrid):
        return transform.params[transform.cell_of(pts)]
    tau = np.asarray(transform, dtype=float)
    if tau.shape != (D,):
        raise ArgumentError(f"expected an 8-vector transform, got shape {tau.shape}")
    return tau


def _check_transform(transform) -> None:
    if isinstance(transform, CellGrid):
        check_invertible(transform.params, "cell grid")
    else:
        check_invertible(transform)


def map_points(transform, pts: np.ndarray, frame: NormalizationTransform = PIXEL_FRAME) -> np.ndarray:
    """Reference-frame pixel coordinates to source pixel coordinates."""
    tau = _per_point_params(transform, pts)
    return frame.to_pixels(apply_homography(tau, frame.to_normalized(pts)))


def bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray, gradient: bool = False):
    """Bilinear samples of ``image`` at ``(x, y)`` with an inside-rectangle mask.

    With ``gradient`` the exact derivative of the interpolant is returned too.
    """
    h, w = image.shape
    inside = (x >= -EDGE_SLACK) & (x <= w - 1 + EDGE_SLACK) & (y >= -EDGE_SLACK) & (y <= h - 1 + EDGE_SLACK)
    xc = np.where(inside, np.clip(x, 0.0, w - 1), 0.0)
    yc = np.where(inside, np.clip(y, 0.0, h - 1), 0.0)
    x0 = np.minimum(np.floor(xc).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = xc - x0, yc - y0
    a, b = image[y0, x0], image[y0, x1]
    c, d = image[y1, x0], image[y1, x1]
    top = a + fx * (b - a)
    bot = c + fx * (d - c)
    val = np.where(inside, top + fy * (bot - top), 0.0)
    if not gradient:
        return val, inside
    gx = np.where(inside, (1 - fy) * (b - a) + fy * (d - c), 0.0)
    gy = np.where(inside, bot - top, 0.0)
    return val, inside, gx, gy


def warp_image(source: np.ndarray, transform, canvas: Canvas,
               frame: NormalizationTransform = PIXEL_FRAME) -> WarpedImage:
    """Resample ``source`` on the canvas; pixels mapping outside the source are masked out."""
    source = np.asarray(source, dtype=float)
    if source.ndim != 2 or source.size == 0:
        raise ArgumentError("source must be a nonempty 2-D image")
    _check_transform(transform)
    q = map_points(transform, canvas.points(), frame)
    val, inside = bilinear(source, q[:, 0], q[:, 1])
    return WarpedImage(val.reshape(canvas.shape), inside.reshape(canvas.shape))


def intensity_jacobian(source: np.ndarray, transform, canvas: Canvas, pixels: np.ndarray,
                       frame: NormalizationTransform = PIXEL_FRAME) -> np.ndarray:
    """Rows ``dI(t(p; tau))/dtau`` for the given flat canvas indices, shape ``(P, 8)``.

    The image gradient is the exact derivative of the bilinear interpolant.
    For a cell grid each row refers to the cell containing its pixel.
    """
    source = np.asarray(source, dtype=float)
    pts = canvas.points(pixels)
    tau = _per_point_params(transform, pts)
    pn = frame.to_normalized(pts)
    q = frame.to_pixels(apply_homography(tau, pn))
    _, inside, gx, gy = bilinear(source, q[:, 0], q[:, 1], gradient=True)
    Jc = coordinate_jacobian(tau, pn) / frame.scale
    rows = gx[:, None] * Jc[:, 0, :] + gy[:, None] * Jc[:, 1, :]
    rows[~inside] = 0.0
    return rows


def warped_corners(transform, shape: tuple[int, int], frame: NormalizationTransform = PIXEL_FRAME) -> np.ndarray:
    """Reference-frame positions of the source image corners, shape ``(4, 2)``.

    For a cell grid every cell contributes the inverse images of the corners.
    """
    h, w = shape
    corners = np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])
    taus = transform.params if isinstance(transform, CellGrid) else np.asarray(transform)[None]
    out = []
    for tau in taus:
        out.append(frame.to_pixels(apply_homography(invert(tau), frame.to_normalized(corners))))
    return np.concatenate(out, axis=0)


def gaussian_presmooth(image: np.ndarray, sigma: float = 0.8) -> np.ndarray:
    from scipy.ndimage import gaussian_filter

    return gaussian_filter(np.asarray(image, dtype=float), sigma, mode="nearest")
