"""Gain compensation from the rank-1 factors and feather blending."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .canvas_regions import RegionDecomposition
from .geometry import WarpedImage
from .linalg_kernels import Rank1Factors


@dataclass
class Panorama:
    intensities: np.ndarray  # (h, w) or (h, w, channels)
    coverage: np.ndarray  # (h, w) bool


def gain_compensate(region_factors: list[Rank1Factors], bookkeeping: RegionDecomposition,
                    reference: int = 0) -> np.ndarray:
    """Per-image gains relative to the reference image.

    Within a region the columns of ``L_r`` are proportional to the gains, so
    ``sigma_r * v_r`` gives gain ratios. Ratios from all regions are combined
    by least squares on log gains, weighted by region size.
    """
    n = bookkeeping.n_images
    rows, rhs, wts = [], [], []
    for fac, reg in zip(region_factors, bookkeeping.regions):
        c = np.abs(fac.sigma * fac.v)
        ids = reg.images
        for a in range(1, len(ids)):
            if c[a] <= 0 or c[0] <= 0:
                continue
            row = np.zeros(n)
            row[ids[a]] = 1.0
            row[ids[0]] = -1.0
            rows.append(row)
            rhs.append(np.log(c[a] / c[0]))
            wts.append(np.sqrt(reg.m))
    covered = {i for reg in bookkeeping.regions for i in reg.images}
    missing = sorted(set(range(n)) - covered)
    if missing:
        warnings.warn(f"images {missing} lie in no region; their gain is set to 1", RuntimeWarning, stacklevel=2)
    anchor = np.zeros(n)
    anchor[reference] = 1.0
    big = 1e6
    A = np.array(rows + [anchor]) * np.array(wts + [big])[:, None] if rows else anchor[None] * big
    b = np.array(rhs + [0.0]) * np.array(wts + [big]) if rows else np.zeros(1)
    logg = np.linalg.lstsq(A, b, rcond=None)[0]
    g = np.exp(logg)
    g[missing] = 1.0
    return g


def feather_weights(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance to the nearest uncovered pixel, counting the canvas border as uncovered."""
    padded = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
    return distance_transform_edt(padded)[1:-1, 1:-1]


def feather_blend(warped: list[WarpedImage], gains=None) -> Panorama:
    """Distance-weighted average of gain-corrected warped images."""
    n = len(warped)
    gains = np.ones(n) if gains is None else np.asarray(gains, dtype=float)
    shape = warped[0].intensities.shape
    num = np.zeros(shape)
    den = np.zeros(warped[0].mask.shape)
    for w, g in zip(warped, gains):
        wt = feather_weights(w.mask)
        if w.intensities.ndim == 3:
            num += wt[..., None] * w.intensities / g
        else:
            num += wt * w.intensities / g
        den += wt
    cover = den > 0
    safe = np.where(cover, den, 1.0)
    out = num / (safe[..., None] if num.ndim == 3 else safe)
    out[~cover] = 0.0
    return Panorama(np.clip(out, 0.0, 255.0), cover)
