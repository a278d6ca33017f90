"""Alignment-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exceptions import ArgumentError, PointAtInfinityError, UndefinedMetricError
from .geometry import PIXEL_FRAME, NormalizationTransform, map_points


@dataclass(frozen=True)
class MetricConfig:
    truncation_t: float = 25.0
    success_threshold: float = 1.0

    def __post_init__(self):
        if not (self.truncation_t > 0 and self.success_threshold > 0):
            raise ArgumentError("metric parameters must be positive")


def truncated_l2(img1, img2, mask, cfg: MetricConfig = MetricConfig()) -> float:
    """Root mean of per-pixel squared differences saturated at ``t^2`` over ``mask``."""
    a = np.asarray(img1, dtype=float)
    b = np.asarray(img2, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or mask.shape != a.shape[: mask.ndim]:
        raise ArgumentError("image and mask shapes differ")
    if not mask.any():
        raise UndefinedMetricError("truncated l2 over an empty overlap")
    diff = a[mask] - b[mask]
    sq = diff ** 2 if diff.ndim == 1 else np.sum(diff ** 2, axis=-1)
    return float(np.sqrt(np.mean(np.minimum(sq, cfg.truncation_t ** 2))))


def pairwise_truncated_l2(warped, cfg: MetricConfig = MetricConfig()) -> tuple[dict[tuple[int, int], float], float]:
    """Per-pair distances over each pair's overlap and their overlap-weighted mean."""
    per = {}
    weights = {}
    for i, j in combinations(range(len(warped)), 2):
        m = warped[i].mask & warped[j].mask
        if m.any():
            per[(i, j)] = truncated_l2(warped[i].intensities, warped[j].intensities, m, cfg)
            weights[(i, j)] = int(m.sum())
    if not per:
        raise UndefinedMetricError("no overlapping image pairs")
    total = sum(weights.values())
    agg = float(np.sqrt(sum(weights[k] * per[k] ** 2 for k in per) / total))
    return per, agg


def transform_distance(tau1, tau2, h: int, w: int, frame: NormalizationTransform = PIXEL_FRAME) -> float:
    """Mean squared pixel displacement between two transforms over the ``h x w`` grid.

    Transforms may be 8-vectors (interpreted in ``frame``) or cell grids.
    """
    if h < 1 or w < 1:
        raise ArgumentError("grid must be nonempty")
    X, Y = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    try:
        a = map_points(tau1, pts, frame)
        b = map_points(tau2, pts, frame)
    except PointAtInfinityError as exc:
        raise PointAtInfinityError(f"transform distance undefined: {exc}") from exc
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def success_fraction(trials, cfg: MetricConfig = MetricConfig()) -> float:
    """Fraction of ``(tau_true, tau_est, h, w[, frame])`` trials with distance below threshold."""
    trials = list(trials)
    if not trials:
        raise ArgumentError("success_fraction needs at least one trial")
    ok = 0
    for t in trials:
        frame = t[4] if len(t) > 4 else PIXEL_FRAME
        ok += transform_distance(t[0], t[1], t[2], t[3], frame) < cfg.success_threshold
    return ok / len(trials)
