"""End-to-end alignment: coarse initialization, pyramid refinement, composition."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .canvas_regions import compute_canvas
from .compositor import Panorama, feather_blend, gain_compensate
from .exceptions import ArgumentError, UndefinedMetricError
from .geometry import (
    CellGrid,
    PIXEL_FRAME,
    NormalizationTransform,
    WarpedImage,
    from_pixel_matrix,
    matrix_to_params,
    normalization_for,
    params_to_matrix,
    to_pixel_matrix,
    warp_image,
    warped_corners,
)
from .initializer import HMRFParams, chain_pairwise, em_initialize
from .metrics import MetricConfig, pairwise_truncated_l2
from .solver import SolverConfig, build_pyramid, pyramid_align, rescale_transform, usable_levels
from .validation import check_images


@dataclass
class PipelineResult:
    transforms: list  # full-resolution, normalized frame
    frame: NormalizationTransform
    canvas: object
    warped: list
    gains: np.ndarray
    history: list = field(default_factory=list)
    pair_errors: dict = field(default_factory=dict)
    aggregate_error: float = float("nan")
    wall_time: float = 0.0
    outer_iterations: int = 0

    def pixel_transforms(self) -> list:
        return [to_pixel_frame(t, self.frame) for t in self.transforms]


def to_pixel_frame(t, frame: NormalizationTransform):
    if isinstance(t, CellGrid):
        return t.copy(np.array([matrix_to_params(to_pixel_matrix(p, frame)) for p in t.params]))
    return matrix_to_params(to_pixel_matrix(t, frame))


def from_pixel_frame(t, frame: NormalizationTransform):
    if isinstance(t, CellGrid):
        return t.copy(np.array([from_pixel_matrix(params_to_matrix(p), frame) for p in t.params]))
    return from_pixel_matrix(params_to_matrix(t), frame)


def footprint_bounds(t, shape, frame) -> tuple[float, float, float, float]:
    c = warped_corners(t, shape, frame)
    lo = np.floor(c.min(axis=0) + 1e-9)
    hi = np.ceil(c.max(axis=0) - 1e-9) + 1.0
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def coarse_initialization(images, cfg: SolverConfig, hmrf: HMRFParams | None = None) -> np.ndarray:
    """Pairwise EM at the coarsest pyramid level, chained and lifted to full resolution."""
    n = len(images)
    levels = usable_levels([im.shape for im in images], cfg.pyramid_levels)
    coarse = [build_pyramid(im, levels)[-1] for im in images]
    full = normalization_for(images[cfg.reference].shape[1], images[cfg.reference].shape[0])
    h, w = coarse[cfg.reference].shape
    cframe = normalization_for(w, h)
    pairs = [em_initialize(coarse[k], coarse[k + 1], hmrf, frame=cframe) for k in range(n - 1)]
    chained = chain_pairwise(pairs, cfg.reference)
    factor = 2.0 ** (levels - 1)
    return np.array([rescale_transform(t, cframe, full, factor) for t in chained])


def align_images(images, cfg: SolverConfig | None = None, hmrf: HMRFParams | None = None,
                 cells: tuple[int, int] = (1, 1), initial=None, use_em: bool = True,
                 metric_cfg: MetricConfig = MetricConfig()) -> PipelineResult:
    """Align grayscale images; ``initial`` (full-resolution, normalized frame) skips the EM stage."""
    cfg = cfg or SolverConfig()
    imgs = check_images(images)
    if not 0 <= cfg.reference < len(imgs):
        raise ArgumentError(f"reference index {cfg.reference} out of range")
    t0 = time.perf_counter()
    n = len(imgs)
    ref = imgs[cfg.reference]
    frame = normalization_for(ref.shape[1], ref.shape[0])
    if initial is not None:
        init = np.asarray(initial, dtype=float).reshape(n, 8)
    elif use_em and len({im.shape for im in imgs}) == 1:
        init = coarse_initialization(imgs, cfg, hmrf)
    elif use_em:
        warnings.warn("images differ in size; skipping the EM initializer", RuntimeWarning, stacklevel=2)
        init = np.zeros((n, 8))
    else:
        init = np.zeros((n, 8))
    if tuple(cells) != (1, 1):
        start = [CellGrid(cells[0], cells[1], footprint_bounds(init[i], imgs[i].shape, frame),
                          np.tile(init[i], (cells[0] * cells[1], 1))) for i in range(n)]
    else:
        start = init
    res = pyramid_align(imgs, start, cfg)
    transforms = res.transforms
    canvas = compute_canvas([warped_corners(t, im.shape, frame) for t, im in zip(transforms, imgs)])
    warped = [warp_image(im, t, canvas, frame) for im, t in zip(imgs, transforms)]
    if res.decomposition is not None and res.decomposition.regions:
        gains = gain_compensate(res.factors, res.decomposition, cfg.reference)
    else:
        gains = np.ones(n)
    try:
        per, agg = pairwise_truncated_l2(warped, metric_cfg)
    except UndefinedMetricError:
        per, agg = {}, float("nan")
    return PipelineResult(transforms, frame, canvas, warped, gains, res.history, per, agg,
                          time.perf_counter() - t0, len(res.history))


def compose_panorama(images, result: PipelineResult) -> Panorama:
    """Blend images (grayscale or colour) with the aligned transforms and gains."""
    warped = []
    for im, t in zip(images, result.transforms):
        im = np.asarray(im, dtype=float)
        if im.ndim == 3:
            chans = [warp_image(im[..., c], t, result.canvas, result.frame) for c in range(im.shape[2])]
            warped.append(WarpedImage(np.stack([c.intensities for c in chans], axis=-1), chans[0].mask))
        else:
            warped.append(warp_image(im, t, result.canvas, result.frame))
    return feather_blend(warped, result.gains)


def evaluate_alignment(images, transforms, canvas=None, metric_cfg: MetricConfig = MetricConfig()):
    """Pairwise truncated l2 of grayscale images under pixel-frame transforms.

    Returns ``(per_pair, aggregate)``; the canvas defaults to the union of footprints.
    """
    imgs = check_images(images)
    if len(transforms) != len(imgs):
        raise ArgumentError(f"{len(transforms)} transforms for {len(imgs)} images")
    if canvas is None:
        canvas = compute_canvas([warped_corners(t, im.shape, PIXEL_FRAME) for t, im in zip(transforms, imgs)])
    warped = [warp_image(im, t, canvas, PIXEL_FRAME) for im, t in zip(imgs, transforms)]
    return pairwise_truncated_l2(warped, metric_cfg)
