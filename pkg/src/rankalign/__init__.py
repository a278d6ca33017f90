"""Panoramic image alignment by rank-1 plus sparse decomposition."""

from .canvas_regions import Region, RegionDecomposition, compute_canvas, discover_regions, extract_region_matrix
from .compositor import Panorama, feather_blend, gain_compensate
from .estimator import PanoramaAligner, RankOneSparse
from .exceptions import (
    AlignmentError,
    ArgumentError,
    ConvergenceError,
    DegenerateTransformError,
    DivergenceError,
    NumericalError,
    PointAtInfinityError,
    RankDeficiencyWarning,
    UndefinedMetricError,
)
from .geometry import Canvas, CellGrid, NormalizationTransform, warp_image
from .initializer import HMRFParams, bp_marginals, chain_pairwise, em_initialize
from .linalg_kernels import Rank1Factors, rank1_project, soft_threshold, thin_qr
from .metrics import MetricConfig, pairwise_truncated_l2, success_fraction, transform_distance, truncated_l2
from .pipeline import PipelineResult, align_images, compose_panorama, evaluate_alignment
from .solver import (
    SolverConfig,
    iteration_budget,
    outer_align,
    pyramid_align,
    solve_multi,
    solve_multicell,
    solve_single,
)

__version__ = "0.1.0"

__all__ = [
    "Region",
    "RegionDecomposition",
    "compute_canvas",
    "discover_regions",
    "extract_region_matrix",
    "Panorama",
    "feather_blend",
    "gain_compensate",
    "PanoramaAligner",
    "RankOneSparse",
    "AlignmentError",
    "ArgumentError",
    "ConvergenceError",
    "DegenerateTransformError",
    "DivergenceError",
    "NumericalError",
    "PointAtInfinityError",
    "RankDeficiencyWarning",
    "UndefinedMetricError",
    "Canvas",
    "CellGrid",
    "NormalizationTransform",
    "warp_image",
    "HMRFParams",
    "bp_marginals",
    "chain_pairwise",
    "em_initialize",
    "Rank1Factors",
    "rank1_project",
    "soft_threshold",
    "thin_qr",
    "MetricConfig",
    "pairwise_truncated_l2",
    "success_fraction",
    "transform_distance",
    "truncated_l2",
    "PipelineResult",
    "align_images",
    "compose_panorama",
    "evaluate_alignment",
    "SolverConfig",
    "iteration_budget",
    "outer_align",
    "pyramid_align",
    "solve_multi",
    "solve_multicell",
    "solve_single",
]
