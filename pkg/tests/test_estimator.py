import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rankalign.estimator import PanoramaAligner, RankOneSparse
from rankalign.exceptions import ArgumentError
from rankalign.metrics import transform_distance
from rankalign.solver import SolverConfig, solve_single
from rankalign.synth_bench import gen_alignment_scene, gen_rpca_instance


class TestRankOneSparse:
    def test_params_and_clone(self):
        est = RankOneSparse(beta0=2.0, q=0.6)
        assert est.get_params()["beta0"] == 2.0
        c = clone(est)
        assert c.get_params() == est.get_params() and c is not est
        est.set_params(q=0.8)
        assert est.q == 0.8

    def test_matches_solver(self):
        inst = gen_rpca_instance(120, 5, 4, 0.05, 0)
        est = RankOneSparse(n_iter=20).fit(inst.D, inst.jacobians)
        ref = solve_single(inst.D, list(inst.jacobians), SolverConfig(inner_iterations=20))
        assert np.array_equal(est.delta_tau_, ref.delta_tau)
        assert np.array_equal(est.sparse_, ref.S)
        assert est.n_features_in_ == 5

    def test_without_jacobians(self):
        rng = np.random.default_rng(1)
        L = np.outer(rng.normal(size=50), rng.uniform(1, 2, 4))
        S = np.zeros_like(L)
        S[3, 1] = 40.0
        low = RankOneSparse().fit_transform(L + S)
        assert np.abs(low - L).max() < 1e-3

    def test_bad_input(self):
        with pytest.raises(ArgumentError):
            RankOneSparse().fit(np.array([[np.nan, 1.0], [1.0, 1.0]]))
        with pytest.raises(ArgumentError):
            RankOneSparse().fit(np.ones((5, 3)), np.ones((2, 5, 2)))


class TestPanoramaAligner:
    def test_fit_transform_score(self):
        (a, b), truth = gen_alignment_scene(64, 3.0, 0.0, 4)
        est = PanoramaAligner()
        with pytest.raises(NotFittedError):
            est.transform([a, b])
        est.fit([a, b])
        assert transform_distance(truth, est.transforms_[1], 64, 64) < 1.0
        assert np.allclose(est.transforms_[0], 0.0)
        pano = est.transform([a, b])
        assert pano.shape == (est.canvas_.height, est.canvas_.width)
        assert est.score() == -est.result_.aggregate_error and est.score() > -5.0

    def test_colour_input(self):
        (a, b), _ = gen_alignment_scene(48, 2.0, 0.0, 5)
        rgb = [np.repeat(x[..., None], 3, axis=2) for x in (a, b)]
        est = PanoramaAligner().fit(rgb)
        gray = PanoramaAligner().fit([a, b])
        assert np.allclose(est.transforms_[1], gray.transforms_[1], atol=1e-9)
        assert est.transform(rgb).shape[2] == 3

    def test_clone(self):
        est = PanoramaAligner(levels=2, cells=(2, 2))
        assert clone(est).get_params()["cells"] == (2, 2)

    def test_too_few_images(self):
        with pytest.raises(ArgumentError):
            PanoramaAligner().fit([np.zeros((8, 8))])
