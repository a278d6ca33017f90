"""scikit-learn style wrappers around the solver and the alignment pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .initializer import HMRFParams
from .metrics import MetricConfig
from .pipeline import align_images, compose_panorama
from .solver import SolverConfig, solve_single
from .validation import check_images, check_jacobians, check_matrix


class RankOneSparse(BaseEstimator):
    """Rank-1 plus sparse decomposition of ``D + J dtau`` with per-column increments.

    ``fit(D, jacobians)`` sets ``low_rank_``, ``sparse_``, ``delta_tau_``
    (shape ``(d, n)``) and ``result_``. Without Jacobians the columns are
    fixed and the model reduces to rank-1 plus sparse splitting of ``D``.
    """

    def __init__(self, beta0: float = 1.0, beta1: float = 1.0, q: float = 0.7,
                 epsilon: float = 1e-5, n_iter: int | None = None):
        self.beta0 = beta0
        self.beta1 = beta1
        self.q = q
        self.epsilon = epsilon
        self.n_iter = n_iter

    def _config(self) -> SolverConfig:
        return SolverConfig(beta0=self.beta0, beta1=self.beta1, q=self.q,
                            epsilon_inner=self.epsilon, inner_iterations=self.n_iter)

    def fit(self, D, jacobians=None):
        D = check_matrix(D, "D")
        m, n = D.shape
        J = np.zeros((n, m, 1)) if jacobians is None else check_jacobians(jacobians, m, n)
        res = solve_single(D, list(J), self._config())
        self.result_ = res
        self.low_rank_ = res.L.matrix()
        self.sparse_ = res.S
        self.delta_tau_ = res.delta_tau
        self.n_features_in_ = n
        return self

    def fit_transform(self, D, jacobians=None) -> np.ndarray:
        """Fit and return the rank-1 component."""
        return self.fit(D, jacobians).low_rank_


class PanoramaAligner(BaseEstimator, TransformerMixin):
    """Aligns a list of grayscale images and composes them into a panorama.

    ``fit(images)`` sets ``transforms_`` (pixel frame, reference image at
    identity), ``result_``, ``gains_`` and ``canvas_``. ``transform(images)``
    blends the same images (grayscale or colour) with the fitted transforms.
    """

    def __init__(self, levels: int = 1, cells: tuple[int, int] = (1, 1), lam: float = 10.0,
                 beta0: float = 1.0, beta1: float = 1.0, q: float = 0.7, reference: int = 0,
                 use_em: bool = True, kappa: float = 8.0, eta: float = 1e-3, alpha: float = 1.0,
                 max_displacement: int | None = None, truncation_t: float = 25.0):
        self.levels = levels
        self.cells = cells
        self.lam = lam
        self.beta0 = beta0
        self.beta1 = beta1
        self.q = q
        self.reference = reference
        self.use_em = use_em
        self.kappa = kappa
        self.eta = eta
        self.alpha = alpha
        self.max_displacement = max_displacement
        self.truncation_t = truncation_t

    def fit(self, X, y=None):
        gray = [im if np.ndim(im) == 2 else np.asarray(im, float)[..., :3] @ [0.299, 0.587, 0.114] for im in X]
        imgs = check_images(gray)
        cfg = SolverConfig(beta0=self.beta0, beta1=self.beta1, q=self.q, lam=self.lam,
                           pyramid_levels=self.levels, reference=self.reference)
        hmrf = HMRFParams(kappa=self.kappa, eta=self.eta, alpha=self.alpha, L=self.max_displacement)
        res = align_images(imgs, cfg, hmrf, cells=tuple(self.cells), use_em=self.use_em,
                           metric_cfg=MetricConfig(truncation_t=self.truncation_t))
        self.result_ = res
        self.transforms_ = res.pixel_transforms()
        self.gains_ = res.gains
        self.canvas_ = res.canvas
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "result_"):
            raise NotFittedError("PanoramaAligner is not fitted")
        return compose_panorama(X, self.result_).intensities

    def score(self, X=None, y=None) -> float:
        """Negative overlap-weighted truncated l2 of the fitted alignment."""
        if not hasattr(self, "result_"):
            raise NotFittedError("PanoramaAligner is not fitted")
        return -self.result_.aggregate_error
