"""Canvas sizing, greedy overlap-region discovery and region data matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AlignmentError, ArgumentError
from .geometry import Canvas, WarpedImage


def compute_canvas(warp_corners) -> Canvas:
    """Smallest integer pixel rectangle enclosing every warped corner."""
    quads = [np.asarray(q, dtype=float).reshape(-1, 2) for q in warp_corners]
    if not quads:
        raise ArgumentError("compute_canvas needs at least one image")
    pts = np.concatenate(quads)
    lo = np.floor(pts.min(axis=0) + 1e-9).astype(int)
    hi = np.ceil(pts.max(axis=0) - 1e-9).astype(int)
    return Canvas((int(lo[0]), int(lo[1])), int(hi[0] - lo[0] + 1), int(hi[1] - lo[1] + 1))


@dataclass
class Region:
    pixels: np.ndarray  # flat canvas indices, ascending
    images: tuple[int, ...]  # image ids in column order

    @property
    def column_of(self) -> dict[int, int]:
        return {i: c for c, i in enumerate(self.images)}

    @property
    def m(self) -> int:
        return int(self.pixels.size)

    @property
    def n(self) -> int:
        return len(self.images)


@dataclass
class RegionDecomposition:
    regions: list[Region]
    n_images: int
    regions_of: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        self.regions_of = {i: [] for i in range(self.n_images)}
        for r, reg in enumerate(self.regions):
            for i in reg.images:
                self.regions_of[i].append(r)

    def __len__(self) -> int:
        return len(self.regions)

    def filtered(self, min_rows_per_column: int = 16) -> "RegionDecomposition":
        """Drop regions with fewer than ``min_rows_per_column * n_r`` pixels."""
        keep = [r for r in self.regions if r.m >= min_rows_per_column * r.n]
        return RegionDecomposition(keep, self.n_images)


def discover_regions(masks) -> RegionDecomposition:
    """Greedy peeling of overlap pixels by largest covering image subset.

    Each step takes the image subset, among those still covering at least one
    unassigned pixel, with the most members (ties: lexicographically smallest
    id tuple) and claims every unassigned pixel covered by all its members.
    """
    M = np.stack([np.asarray(m, dtype=bool).ravel() for m in masks])
    n = M.shape[0]
    free = M.sum(axis=0) >= 2
    regions = []
    while np.any(free):
        idx = np.flatnonzero(free)
        # covering sets of the remaining pixels, as sorted id tuples
        sets = _covering_sets(M[:, idx])
        best = min(sets, key=lambda s: (-len(s), s))
        claim = idx[np.all(M[list(best)][:, idx], axis=0)]
        regions.append(Region(claim, best))
        free[claim] = False
    return RegionDecomposition(regions, n)


def _covering_sets(cols: np.ndarray) -> set[tuple[int, ...]]:
    uniq = np.unique(cols, axis=1)
    return {tuple(int(i) for i in np.flatnonzero(uniq[:, k])) for k in range(uniq.shape[1])}


def extract_region_matrix(warped: list[WarpedImage], region: Region) -> np.ndarray:
    """``m_r x n_r`` matrix of warped intensities on the region pixels."""
    cols = []
    for i in region.images:
        w = warped[i]
        if not np.all(w.mask.ravel()[region.pixels]):
            raise AlignmentError(f"image {i} does not cover every pixel of its region")
        cols.append(w.intensities.ravel()[region.pixels])
    return np.stack(cols, axis=1)
