import numpy as np
import pytest

from latentprior import gaussian
from latentprior.errors import InputFormatError


@pytest.fixture(scope="module")
def small_model():
    rng = np.random.default_rng(5)
    # Correlated, non-centered data so nothing is trivially diagonal.
    raw = rng.standard_normal((600, 5))
    mix = rng.standard_normal((5, 5))
    samples = raw @ mix + np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    return gaussian.fit_gaussian(samples, samples * 0.5), samples


class TestFit:
    def test_moments_match_numpy(self, small_model):
        model, samples = small_model
        np.testing.assert_allclose(model.mean_v, samples.mean(axis=0))
        np.testing.assert_allclose(model.cov_v,
                                   np.cov(samples, rowvar=False), rtol=1e-12)
        np.testing.assert_allclose(model.mean_w, 0.5 * samples.mean(axis=0))
        assert model.sample_count == 600

    def test_structural_invariants(self, small_model):
        gaussian.validate_model(small_model[0])

    def test_validate_catches_corruption(self, small_model):
        model, _ = small_model
        from dataclasses import replace
        bad = replace(model, eigvals=model.eigvals[::-1].copy())
        with pytest.raises(ValueError):
            gaussian.validate_model(bad)

    def test_eigvals_descending_nonnegative(self, small_model):
        vals = small_model[0].eigvals
        assert np.all(np.diff(vals) <= 0) and np.all(vals >= 0)

    def test_sigma_max_is_sqrt_top_eigval(self, small_model):
        model, _ = small_model
        assert model.sigma_max == np.sqrt(model.eigvals[0])

    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError):
            gaussian.fit_gaussian(np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(ValueError):
            gaussian.fit_gaussian(np.full((5, 3), np.nan), np.zeros((5, 3)))
        with pytest.raises(ValueError):
            gaussian.fit_gaussian(np.zeros((5, 3)), np.zeros((5, 4)))

    def test_constant_data_still_factors(self):
        samples = np.ones((10, 3))
        model = gaussian.fit_gaussian(samples, samples)
        # eps floor keeps the Cholesky factor usable on zero covariance
        assert np.all(np.isfinite(model.chol))
        assert gaussian.mahalanobis_sq(model, np.ones(3)) == 0.0


class TestMahalanobis:
    def test_matches_explicit_inverse(self, small_model):
        model, _ = small_model
        rng = np.random.default_rng(6)
        reg_inv = np.linalg.inv(model.cov_v + model.epsilon * np.eye(model.dim))
        for _ in range(50):
            v = rng.standard_normal(model.dim) * 4.0
            want = (v - model.mean_v) @ reg_inv @ (v - model.mean_v)
            assert gaussian.mahalanobis_sq(model, v) == pytest.approx(
                want, rel=1e-10)

    def test_zero_at_mean(self, small_model):
        model, _ = small_model
        assert gaussian.mahalanobis_sq(model, model.mean_v) == 0.0

    def test_batch_matches_scalar(self, small_model):
        model, _ = small_model
        rng = np.random.default_rng(7)
        vs = rng.standard_normal((20, model.dim))
        batch = gaussian.mahalanobis_sq_batch(model, vs)
        for i, v in enumerate(vs):
            assert batch[i] == pytest.approx(gaussian.mahalanobis_sq(model, v),
                                             rel=1e-12)

    def test_gradient_matches_fd(self, small_model):
        model, _ = small_model
        rng = np.random.default_rng(8)
        v = rng.standard_normal(model.dim)
        grad = gaussian.mahalanobis_sq_grad(model, v)
        h = 1e-6
        for i in range(model.dim):
            e = np.zeros(model.dim)
            e[i] = h
            fd = (gaussian.mahalanobis_sq(model, v + e)
                  - gaussian.mahalanobis_sq(model, v - e)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_grad_batch_matches_scalar(self, small_model):
        model, _ = small_model
        rng = np.random.default_rng(9)
        vs = rng.standard_normal((10, model.dim))
        batch = gaussian.mahalanobis_sq_grad_batch(model, vs)
        for i, v in enumerate(vs):
            np.testing.assert_allclose(batch[i],
                                       gaussian.mahalanobis_sq_grad(model, v),
                                       rtol=1e-12)

    def test_shape_errors(self, small_model):
        model, _ = small_model
        with pytest.raises(ValueError):
            gaussian.mahalanobis_sq(model, np.zeros(model.dim + 1))
        with pytest.raises(ValueError):
            gaussian.mahalanobis_sq_batch(model, np.zeros((3, model.dim + 1)))


class TestSampling:
    def test_deterministic_given_seed(self, small_model):
        model, _ = small_model
        a = gaussian.sample_latents(model, 123, 50)
        b = gaussian.sample_latents(model, 123, 50)
        assert np.array_equal(a, b)

    def test_moments_recover_model(self, small_model):
        model, _ = small_model
        xs = gaussian.sample_latents(model, 3, 60000)
        np.testing.assert_allclose(xs.mean(axis=0), model.mean_v, atol=0.05)
        np.testing.assert_allclose(np.cov(xs, rowvar=False), model.cov_v,
                                   atol=0.15)

    def test_generator_argument_advances_stream(self, small_model):
        model, _ = small_model
        rng = np.random.default_rng(0)
        a = gaussian.sample_latents(model, rng, 5)
        b = gaussian.sample_latents(model, rng, 5)
        assert not np.array_equal(a, b)

    def test_rejects_nonpositive_n(self, small_model):
        with pytest.raises(ValueError):
            gaussian.sample_latents(small_model[0], 0, 0)


class TestFrechet:
    def test_identical_models_zero(self, small_model):
        assert gaussian.frechet_distance(small_model[0], small_model[0]) == 0.0

    def test_one_dimensional_closed_form(self):
        rng = np.random.default_rng(11)
        a = rng.normal(2.0, 1.5, (3000, 1))
        b = rng.normal(-1.0, 0.5, (3000, 1))
        ma = gaussian.fit_gaussian(a, a)
        mb = gaussian.fit_gaussian(b, b)
        want = ((ma.mean_v[0] - mb.mean_v[0]) ** 2
                + (np.sqrt(ma.cov_v[0, 0]) - np.sqrt(mb.cov_v[0, 0])) ** 2)
        assert gaussian.frechet_distance(ma, mb) == pytest.approx(want,
                                                                  abs=1e-10)

    def test_symmetric(self, small_model):
        model, _ = small_model
        rng = np.random.default_rng(12)
        other = gaussian.fit_gaussian(rng.standard_normal((300, model.dim)),
                                      rng.standard_normal((300, model.dim)))
        d1 = gaussian.frechet_distance(model, other)
        d2 = gaussian.frechet_distance(other, model)
        assert d1 == pytest.approx(d2, abs=1e-8)
        assert d1 > 0

    def test_mean_shift_only(self):
        # Identical covariances: distance reduces to the squared mean gap.
        rng = np.random.default_rng(13)
        xs = rng.standard_normal((2000, 3))
        ma = gaussian.fit_gaussian(xs, xs)
        mb = gaussian.fit_gaussian(xs + np.array([1.0, 0.0, -2.0]), xs)
        assert gaussian.frechet_distance(ma, mb) == pytest.approx(5.0,
                                                                  rel=1e-6)

    def test_dimension_mismatch(self, small_model):
        rng = np.random.default_rng(14)
        other = gaussian.fit_gaussian(rng.standard_normal((100, 2)),
                                      rng.standard_normal((100, 2)))
        with pytest.raises(ValueError):
            gaussian.frechet_distance(small_model[0], other)


class TestSerialization:
    def test_round_trip_is_exact(self, small_model, tmp_path):
        model, _ = small_model
        path = tmp_path / "model.json"
        gaussian.save_model(model, path)
        back = gaussian.load_model(path)
        for name in ("mean_v", "mean_w", "cov_v", "eigvals", "eigvecs"):
            assert np.array_equal(getattr(back, name), getattr(model, name)), name
        assert back.dim == model.dim
        assert back.epsilon == model.epsilon
        assert back.sample_count == model.sample_count
        # chol is rebuilt, not stored; same inputs give the same factor
        assert np.array_equal(back.chol, model.chol)

    def test_missing_key_rejected(self, small_model):
        import json
        doc = json.loads(gaussian.model_to_json(small_model[0]))
        del doc["cov_v"]
        with pytest.raises(InputFormatError):
            gaussian.model_from_json(json.dumps(doc))

    def test_garbage_rejected(self):
        with pytest.raises(InputFormatError):
            gaussian.model_from_json("not json at all {")
