"""Alternating minimization for rank-1 plus sparse alignment.

The inner solvers work on linearized problems: for each overlap region ``r``
the warped data ``D_r`` plus the Jacobian increments should split into a
rank-1 matrix ``L_r`` and a sparse matrix ``S_r``. One engine serves the
single-region, multi-region and cell-grid variants, so the degenerate cases
of the general solvers reproduce the special ones exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .canvas_regions import RegionDecomposition, compute_canvas, discover_regions, extract_region_matrix
from .exceptions import ArgumentError, DivergenceError, NumericalError, RankDeficiencyWarning
from .geometry import (
    D as NPARAM,
    CellGrid,
    NormalizationTransform,
    check_invertible,
    from_pixel_matrix,
    gaussian_presmooth,
    intensity_jacobian,
    map_points,
    normalization_for,
    smoothness_system,
    to_pixel_matrix,
    warp_image,
    warped_corners,
)
from .linalg_kernels import Rank1Factors, rank1_project, soft_threshold, spectral_norm


@dataclass
class SolverConfig:
    beta0: float = 1.0
    beta1: float = 1.0
    q: float = 0.7
    epsilon_inner: float = 1e-5
    epsilon_outer: float = 1e-3
    max_outer: int = 40
    lam: float = 10.0  # smoothness weight in units of pixels per cell
    sigma_smooth: float = 0.2
    pyramid_levels: int = 1
    inner_iterations: int | None = None  # overrides the iteration budget
    reference: int = 0
    presmooth: float = 0.8
    min_rows_per_column: int = 16
    log_path: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> "SolverConfig":
        if not (self.beta0 > 0 and self.beta1 > 0):
            raise ArgumentError("beta0 and beta1 must be positive")
        if not 0 < self.q < 1:
            raise ArgumentError(f"q must lie in (0, 1), got {self.q}")
        if not (self.epsilon_inner > 0 and self.epsilon_outer > 0):
            raise ArgumentError("tolerances must be positive")
        if self.max_outer < 1 or self.pyramid_levels < 1:
            raise ArgumentError("max_outer and pyramid_levels must be at least 1")
        if self.lam < 0 or self.sigma_smooth <= 0:
            raise ArgumentError("lam must be nonnegative and sigma_smooth positive")
        if self.inner_iterations is not None and self.inner_iterations < 1:
            raise ArgumentError("inner_iterations must be at least 1")
        return self


def iteration_budget(epsilon: float, beta0: float, d_norm: float, q: float) -> int:
    """Iterations needed for the threshold schedule to fall below ``epsilon``."""
    if not 0 < q < 1:
        raise ArgumentError("q must lie in (0, 1)")
    if epsilon <= 0 or beta0 <= 0:
        raise ArgumentError("epsilon and beta0 must be positive")
    scale = beta0 * d_norm
    if epsilon >= scale:
        return 1
    k = math.log(epsilon / scale) / math.log(q)
    # guard against ceil of values like 3.0000000000000004
    kr = round(k)
    if abs(k - kr) < 1e-9:
        k = kr
    return max(1, int(math.ceil(k)))


@dataclass
class SolverState:
    """Snapshot handed to iteration callbacks; arrays must not be mutated."""

    k: int
    L: list[Rank1Factors]
    S: list[np.ndarray]
    delta_tau: np.ndarray  # (n_images, n_cells, d)
    delta_tau_prev: np.ndarray
    zeta: np.ndarray


@dataclass
class SolveResult:
    L: list[Rank1Factors]
    S: list[np.ndarray]
    delta_tau: np.ndarray
    iterations: int
    zeta: np.ndarray  # (K + 1, R), row 0 holds the initial thresholds
    sparse_counts: np.ndarray  # (K, R)
    residuals: np.ndarray  # (K, R)

    def __iter__(self):
        return iter((self.L, self.S, self.delta_tau))


@dataclass
class _Region:
    D: np.ndarray
    images: tuple[int, ...]
    J: np.ndarray  # (n_r, m_r, d); zero blocks for fixed images
    cells: np.ndarray | None  # (n_r, m_r) cell index per row, None for single-cell problems
    free: np.ndarray  # (n_r,) bool


def _as_region(D, jac_map, images, cell_map=None) -> _Region:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise ArgumentError("region data must be a matrix")
    m, n = D.shape
    if len(images) != n:
        raise ArgumentError(f"region has {n} columns but {len(images)} image ids")
    d = None
    for i in images:
        Ji = jac_map.get(i)
        if Ji is not None:
            d = np.asarray(Ji).shape[1]
            break
    d = NPARAM if d is None else d
    J = np.zeros((n, m, d))
    free = np.zeros(n, dtype=bool)
    for c, i in enumerate(images):
        Ji = jac_map.get(i)
        if Ji is None:
            continue
        Ji = np.asarray(Ji, dtype=float)
        if Ji.shape != (m, d):
            raise ArgumentError(f"Jacobian of image {i} has shape {Ji.shape}, expected {(m, d)}")
        _finite_or_raise(Ji, f"Jacobian of image {i}", 0)
        J[c] = Ji
        free[c] = True
    cells = None
    if cell_map is not None:
        cells = np.zeros((n, m), dtype=np.int64)
        for c, i in enumerate(images):
            if cell_map.get(i) is not None:
                cells[c] = cell_map[i]
    return _Region(D, tuple(images), J, cells, free)


def _finite_or_raise(x, what: str, k: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite {what} at iteration {k}", iteration=k)


class _Engine:
    def __init__(self, regions: list[_Region], n_images: int, n_cells: int, cfg: SolverConfig,
                 smooth: dict[int, tuple[np.ndarray, np.ndarray]] | None = None, lam: float = 0.0):
        self.regions = regions
        self.n_images = n_images
        self.n_cells = n_cells
        self.cfg = cfg
        self.d = regions[0].J.shape[2] if regions else NPARAM
        self.smooth = smooth or {}
        self.lam = lam
        self.member: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n_images)}
        for r, reg in enumerate(regions):
            for c, i in enumerate(reg.images):
                if reg.free[c]:
                    self.member[i].append((r, c))
        self._prepare()

    def _prepare(self):
        d, C = self.d, self.n_cells
        # images whose increment is a plain pseudo-inverse solve on one region
        self.simple = {}
        for i, mem in self.member.items():
            if len(mem) == 1 and C == 1 and not (self.lam > 0 and i in self.smooth):
                self.simple[i] = mem[0]
        self.pinv = []
        self.simple_cols = []
        for r, reg in enumerate(self.regions):
            cols = np.array([c for c, i in enumerate(reg.images) if self.simple.get(i) == (r, c)], dtype=np.int64)
            self.simple_cols.append(cols)
            self.pinv.append(np.linalg.pinv(reg.J[cols]) if cols.size else None)
        # per (image, region) cell-block Gram matrices for the general path
        self.gram: dict[tuple[int, int], np.ndarray] = {}
        warned = False
        for i, mem in self.member.items():
            if i in self.simple:
                continue
            total = np.zeros((C, d, d))
            for r, c in mem:
                reg = self.regions[r]
                G = np.zeros((C, d, d))
                J = reg.J[c]
                if reg.cells is None:
                    G[0] = J.T @ J
                else:
                    np.add.at(G, reg.cells[c], J[:, :, None] * J[:, None, :])
                self.gram[(i, r)] = G
                total += G
            if not warned and mem and not (self.lam > 0 and i in self.smooth):
                ranks = np.linalg.matrix_rank(total)
                if np.any((ranks < d) & (np.abs(total).sum(axis=(1, 2)) > 0)):
                    warnings.warn("aggregate normal matrix is singular; using min-norm solution",
                                  RankDeficiencyWarning, stacklevel=4)
                    warned = True

    def _apply(self, reg: _Region, delta: np.ndarray) -> np.ndarray:
        """Columns ``J_{r,i} dtau_i`` as an ``m_r x n_r`` matrix."""
        dr = delta[list(reg.images)]
        if reg.cells is None:
            return (reg.J @ dr[:, 0, :, None])[..., 0].T
        per_row = np.take_along_axis(dr, reg.cells[:, :, None], axis=1)
        return np.einsum("jmd,jmd->mj", reg.J, per_row)

    def _increment(self, L, S, zeta) -> np.ndarray:
        d, C = self.d, self.n_cells
        delta = np.zeros((self.n_images, C, d))
        resid = [L[r].matrix() + S[r] - reg.D for r, reg in enumerate(self.regions)]
        for r, reg in enumerate(self.regions):
            cols = self.simple_cols[r]
            if cols.size:
                out = (self.pinv[r] @ resid[r].T[cols, :, None])[..., 0]
                for j, c in enumerate(cols):
                    delta[reg.images[c], 0] = out[j]
        for i, mem in self.member.items():
            if i in self.simple or not mem:
                continue
            A = np.zeros((C, d, d))
            b = np.zeros((C, d))
            for r, c in mem:
                reg = self.regions[r]
                z = zeta[r]
                A += self.gram[(i, r)] / z
                g = reg.J[c] * resid[r][:, c][:, None]
                if reg.cells is None:
                    b[0] += g.sum(axis=0) / z
                else:
                    for k in range(d):
                        b[:, k] += np.bincount(reg.cells[c], weights=g[:, k], minlength=C) / z
            if self.lam > 0 and i in self.smooth:
                Gam, t = self.smooth[i]
                full = scipy.linalg.block_diag(*A) + self.lam * Gam
                rhs = b.ravel() + self.lam * t
                delta[i] = _sym_solve(full, rhs).reshape(C, d)
            else:
                delta[i] = (np.linalg.pinv(A) @ b[:, :, None])[..., 0]
        return delta

    def run(self, callback: Callable[[SolverState], None] | None = None) -> SolveResult:
        cfg = self.cfg
        R = len(self.regions)
        sizes = [math.sqrt(reg.D.size) for reg in self.regions]
        dnorms = [spectral_norm(reg.D) for reg in self.regions]
        if cfg.inner_iterations is not None:
            K = cfg.inner_iterations
        else:
            K = iteration_budget(cfg.epsilon_inner, cfg.beta0, max(dnorms, default=1.0), cfg.q)
        zeta = np.array([cfg.beta0 * dn / sz for dn, sz in zip(dnorms, sizes)])
        S = [soft_threshold(reg.D, zeta[r]) for r, reg in enumerate(self.regions)]
        L: list[Rank1Factors] = [None] * R
        delta = np.zeros((self.n_images, self.n_cells, self.d))
        zetas = np.zeros((K + 1, R))
        zetas[0] = zeta
        counts = np.zeros((K, R), dtype=np.int64)
        resids = np.zeros((K, R))
        log = open(cfg.log_path, "a") if cfg.log_path else None
        try:
            for k in range(1, K + 1):
                zeta = np.empty(R)
                X = []
                for r, reg in enumerate(self.regions):
                    Xr = reg.D + self._apply(reg, delta)
                    Lr = rank1_project(Xr - S[r])
                    zeta[r] = cfg.beta1 * cfg.q ** k * Lr.sigma / sizes[r]
                    S[r] = soft_threshold(Xr - Lr.matrix(), zeta[r])
                    L[r] = Lr
                    X.append(Xr)
                prev = delta
                delta = self._increment(L, S, np.maximum(zeta, np.finfo(float).tiny))
                _finite_or_raise(delta, "increment", k)
                zetas[k] = zeta
                for r, reg in enumerate(self.regions):
                    counts[k - 1, r] = np.count_nonzero(S[r])
                    resids[k - 1, r] = np.linalg.norm(reg.D + self._apply(reg, delta) - L[r].matrix() - S[r])
                    if log is not None:
                        log.write(json.dumps({"k": k, "region": r, "zeta": float(zeta[r]),
                                              "sparse_count": int(counts[k - 1, r]),
                                              "residual": float(resids[k - 1, r])}) + "\n")
                if callback is not None:
                    callback(SolverState(k, list(L), list(S), delta, prev, zeta.copy()))
        finally:
            if log is not None:
                log.close()
        return SolveResult(L, S, delta, K, zetas, counts, resids)


def _sym_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        c = scipy.linalg.cho_factor(A)
        x = scipy.linalg.cho_solve(c, b)
        if np.all(np.isfinite(x)):
            return x
    except np.linalg.LinAlgError:
        pass
    warnings.warn("regularized normal matrix is singular; using min-norm solution",
                  RankDeficiencyWarning, stacklevel=3)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def solve_single(D: np.ndarray, jacobians, cfg: SolverConfig | None = None,
                 callback: Callable[[SolverState], None] | None = None) -> SolveResult:
    """Single-region solver; ``delta_tau`` is returned with shape ``(d, n)``.

    ``L`` and ``S`` of the result are the rank-1 factors and the sparse matrix
    themselves rather than one-element lists.
    """
    cfg = cfg or SolverConfig()
    D = np.asarray(D, dtype=float)
    n = D.shape[1]
    if len(jacobians) != n:
        raise ArgumentError(f"{n} columns but {len(jacobians)} Jacobians")
    reg = _as_region(D, dict(enumerate(jacobians)), tuple(range(n)))
    res = _Engine([reg], n, 1, cfg).run(callback)
    return SolveResult(res.L[0], res.S[0], res.delta_tau[:, 0, :].T, res.iterations,
                       res.zeta, res.sparse_counts, res.residuals)


def _check_book(regions, bookkeeping: RegionDecomposition):
    if len(regions) != len(bookkeeping.regions):
        raise ArgumentError("region data and bookkeeping disagree on the region count")


def solve_multi(regions, bookkeeping: RegionDecomposition, cfg: SolverConfig | None = None,
                callback: Callable[[SolverState], None] | None = None) -> SolveResult:
    """Multi-region solver.

    ``regions`` is a list of ``(D_r, {image id: J_{r,i}})``; a missing or
    ``None`` Jacobian keeps that image fixed. ``delta_tau`` has shape ``(d, n)``.
    """
    cfg = cfg or SolverConfig()
    _check_book(regions, bookkeeping)
    regs = [_as_region(D, jm, bookkeeping.regions[r].images) for r, (D, jm) in enumerate(regions)]
    res = _Engine(regs, bookkeeping.n_images, 1, cfg).run(callback)
    res.delta_tau = res.delta_tau[:, 0, :].T
    return res


def solve_multicell(regions, bookkeeping: RegionDecomposition, cellgrids, lam: float, sigma: float,
                    cfg: SolverConfig | None = None, frame: NormalizationTransform | None = None,
                    callback: Callable[[SolverState], None] | None = None) -> SolveResult:
    """Cell-grid solver with a smoothness term of absolute weight ``lam``.

    ``regions`` is a list of ``(D_r, {image id: (rows, cells)})`` where
    ``rows`` is ``m_r x d`` and ``cells`` gives each row's cell index.
    ``cellgrids[i]`` is image ``i``'s grid at the linearization point.
    ``delta_tau`` has shape ``(n, C, d)``.
    """
    cfg = cfg or SolverConfig()
    if lam < 0:
        raise ArgumentError("lam must be nonnegative")
    _check_book(regions, bookkeeping)
    C = max((g.n_cells for g in cellgrids if g is not None), default=1)
    regs = []
    for r, (D, jm) in enumerate(regions):
        jac = {i: (v[0] if v is not None else None) for i, v in jm.items()}
        cells = None if C == 1 else {i: (v[1] if v is not None else None) for i, v in jm.items()}
        regs.append(_as_region(D, jac, bookkeeping.regions[r].images, cells))
    smooth = {}
    if lam > 0:
        from .geometry import PIXEL_FRAME

        for i, g in enumerate(cellgrids):
            if g is not None and g.n_cells > 1:
                smooth[i] = smoothness_system(g, sigma, frame or PIXEL_FRAME)
    return _Engine(regs, bookkeeping.n_images, C, cfg, smooth, lam).run(callback)


# ---------------------------------------------------------------------------
# outer linearization loop


@dataclass
class AlignResult:
    transforms: list  # 8-vectors or CellGrids, normalized frame
    frame: NormalizationTransform
    outer_iterations: int
    converged: bool
    history: list[dict] = field(default_factory=list)
    decomposition: RegionDecomposition | None = None
    factors: list[Rank1Factors] = field(default_factory=list)
    canvas: object = None


def _to_state(initial, n: int):
    if isinstance(initial, (list, tuple)) and initial and isinstance(initial[0], CellGrid):
        return [g.copy() for g in initial], True
    arr = np.asarray(initial, dtype=float).reshape(n, NPARAM).copy()
    return [arr[i] for i in range(n)], False


def _params_of(t) -> np.ndarray:
    return t.params if isinstance(t, CellGrid) else np.asarray(t)[None]


def _footprint_points(t, shape, frame, samples: int = 32) -> np.ndarray:
    corners = warped_corners(t, shape, frame)
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    xs = np.linspace(lo[0], hi[0], samples)
    ys = np.linspace(lo[1], hi[1], samples)
    X, Y = np.meshgrid(xs, ys)
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _change(old, new, shape, frame) -> float:
    """Mean squared displacement between two transforms, in squared normalized units."""
    pts = _footprint_points(old, shape, frame)
    a = map_points(old, pts, frame)
    b = map_points(new, pts, frame)
    return float(np.mean(np.sum((a - b) ** 2, axis=1))) * frame.scale ** 2


def outer_align(images, initial, cfg: SolverConfig | None = None, frame: NormalizationTransform | None = None,
                smoothed: bool = False) -> AlignResult:
    """Successive linearization: warp, find regions, solve, update, repeat.

    ``initial`` is an ``(n, 8)`` array or a list of ``CellGrid``. The
    reference image stays fixed. Images are pre-smoothed unless ``smoothed``.
    """
    cfg = cfg or SolverConfig()
    imgs = [np.asarray(im, dtype=float) for im in images]
    n = len(imgs)
    if n < 2:
        raise ArgumentError("alignment needs at least two images")
    if not smoothed and cfg.presmooth > 0:
        imgs = [gaussian_presmooth(im, cfg.presmooth) for im in imgs]
    ref = cfg.reference
    if not 0 <= ref < n:
        raise ArgumentError(f"reference index {ref} out of range")
    if frame is None:
        h, w = imgs[ref].shape
        frame = normalization_for(w, h)
    state, cells = _to_state(initial, n)
    for i, t in enumerate(state):
        check_invertible(_params_of(t), f"initial transform of image {i}")
    history = []
    best = ([t.copy() for t in state], np.inf)
    rises = 0
    prev_obj = None
    converged = False
    dec = None
    factors = []
    canvas = None
    it = 0
    for it in range(1, cfg.max_outer + 1):
        canvas = compute_canvas([warped_corners(t, im.shape, frame) for t, im in zip(state, imgs)])
        warped = [warp_image(im, t, canvas, frame) for im, t in zip(imgs, state)]
        dec = discover_regions([w.mask for w in warped]).filtered(cfg.min_rows_per_column)
        if not dec.regions:
            warnings.warn("no usable overlap between the images; stopping", RuntimeWarning, stacklevel=2)
            break
        data = []
        for reg in dec.regions:
            D = extract_region_matrix(warped, reg)
            jm = {}
            for i in reg.images:
                if i == ref:
                    jm[i] = None
                    continue
                rows = intensity_jacobian(imgs[i], state[i], canvas, reg.pixels, frame)
                if cells:
                    jm[i] = (rows, state[i].cell_of(canvas.points(reg.pixels)))
                else:
                    jm[i] = rows
            data.append((D, jm))
        if cells:
            grids = [None if i == ref else state[i] for i in range(n)]
            n_p = np.mean([g.grid_pixels().shape[0] / g.n_cells for g in grids if g is not None])
            res = solve_multicell(data, dec, grids, cfg.lam * n_p, cfg.sigma_smooth, cfg, frame)
            new = [g.copy(g.params + res.delta_tau[i, :g.n_cells]) for i, g in enumerate(state)]
        else:
            res = solve_multi(data, dec, cfg)
            new = [state[i] + res.delta_tau[:, i] for i in range(n)]
        for i, t in enumerate(new):
            check_invertible(_params_of(t), f"transform of image {i}")
        obj = sum(np.abs(S).sum() for S in res.S) / sum(S.size for S in res.S)
        change = max(_change(state[i], new[i], imgs[i].shape, frame) for i in range(n))
        history.append({"iteration": it, "objective": float(obj), "change": change,
                        "regions": len(dec.regions), "inner_iterations": res.iterations})
        if obj < best[1]:
            best = ([t.copy() for t in state], obj)
        if prev_obj is not None and obj > 1.1 * prev_obj:
            rises += 1
        else:
            rises = 0
        if rises >= 3:
            raise DivergenceError("alignment residual increased three times in a row",
                                  best=best[0], iteration=it)
        prev_obj = obj
        state = new
        factors = res.L
        if change < cfg.epsilon_outer ** 2:
            converged = True
            break
    return AlignResult(state, frame, it, converged, history, dec, factors, canvas)


# ---------------------------------------------------------------------------
# pyramid


MIN_COARSE = 32


def downsample(image: np.ndarray) -> np.ndarray:
    """Blur and keep even pixels, so coarse pixel ``k`` sits on fine pixel ``2k``."""
    from scipy.ndimage import gaussian_filter

    return gaussian_filter(np.asarray(image, dtype=float), 1.0, mode="nearest")[::2, ::2]


def build_pyramid(image: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [np.asarray(image, dtype=float)]
    for _ in range(levels - 1):
        pyr.append(downsample(pyr[-1]))
    return pyr


def usable_levels(shapes, levels: int) -> int:
    smallest = min(min(s) for s in shapes)
    ok = 1
    while ok < levels and smallest / 2 ** ok >= MIN_COARSE:
        ok += 1
    if ok < levels:
        warnings.warn(f"pyramid reduced from {levels} to {ok} levels to keep the coarsest level "
                      f"at least {MIN_COARSE} px", RuntimeWarning, stacklevel=3)
    return ok


def rescale_params(tau: np.ndarray, frame_from: NormalizationTransform, frame_to: NormalizationTransform,
                   factor: float) -> np.ndarray:
    """Re-express a transform after scaling pixel coordinates by ``factor``."""
    S = np.diag([factor, factor, 1.0])
    H = S @ to_pixel_matrix(tau, frame_from) @ np.linalg.inv(S)
    return from_pixel_matrix(H, frame_to)


def rescale_transform(t, frame_from, frame_to, factor: float, grid_shape: tuple[int, int] | None = None):
    if isinstance(t, CellGrid):
        params = np.array([rescale_params(p, frame_from, frame_to, factor) for p in t.params])
        b = tuple(v * factor for v in t.bounds)
        g = CellGrid(t.rows, t.cols, b, params)
        if grid_shape is not None and grid_shape != g.shape:
            g = refine_grid(g, *grid_shape)
        return g
    return rescale_params(t, frame_from, frame_to, factor)


def refine_grid(grid: CellGrid, rows: int, cols: int) -> CellGrid:
    """Regrid with children inheriting the parameters of the parent cell containing their centre."""
    fresh = CellGrid(rows, cols, grid.bounds)
    centres = np.array([[(a + c) / 2, (b + d) / 2] for a, b, c, d in map(fresh.cell_rect, range(fresh.n_cells))])
    fresh.params = grid.params[grid.cell_of(centres)].copy()
    return fresh


def level_cells(cells: tuple[int, int], level: int) -> tuple[int, int]:
    return (max(1, cells[0] >> level), max(1, cells[1] >> level))


def pyramid_align(images, initial, cfg: SolverConfig | None = None, initializer: Callable | None = None) -> AlignResult:
    """Coarse-to-fine alignment.

    ``initial`` is expressed at full resolution in the full-resolution frame
    of the reference image. ``initializer``, if given, is called as
    ``initializer(coarse_images, coarse_frame)`` and must return ``(n, 8)``
    coarse-level parameters that replace the single-homography part of
    ``initial``.
    """
    cfg = cfg or SolverConfig()
    imgs = [np.asarray(im, dtype=float) for im in images]
    n = len(imgs)
    levels = usable_levels([im.shape for im in imgs], cfg.pyramid_levels)
    pyrs = [build_pyramid(im, levels) for im in imgs]
    ref = cfg.reference
    frames = []
    for lv in range(levels):
        h, w = pyrs[ref][lv].shape
        frames.append(normalization_for(w, h))
    state, cells = _to_state(initial, n)
    target = state[0].shape if cells else None
    top = levels - 1
    factor = 0.5 ** top
    state = [rescale_transform(t, frames[0], frames[top], factor,
                               level_cells(target, top) if cells else None) for t in state]
    if initializer is not None:
        init = np.asarray(initializer([p[top] for p in pyrs], frames[top]), dtype=float)
        if cells:
            state = [CellGrid(g.rows, g.cols, g.bounds, np.tile(init[i], (g.n_cells, 1))) for i, g in enumerate(state)]
        else:
            state = [init[i].copy() for i in range(n)]
    history = []
    result = None
    for lv in range(top, -1, -1):
        result = outer_align([p[lv] for p in pyrs], state, cfg, frames[lv])
        history.extend(dict(h, level=lv) for h in result.history)
        if lv > 0:
            state = [rescale_transform(t, frames[lv], frames[lv - 1], 2.0,
                                       level_cells(target, lv - 1) if cells else None) for t in result.transforms]
    result.history = history
    return result
