import json
import warnings

import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import trapezoid

from fsirnn import edr, synth
from fsirnn import estimators as est
from fsirnn.spline_basis import gram_matrix, make_basis, project_curves, reconstruct


@pytest.fixture(scope="module")
def spec():
    return synth.default_spec(200, seed=1)


class TestSynthSpec:
    def test_default_truth_has_unit_score_variance(self, spec):
        a = spec.true_directions[:, 0]
        assert a @ spec.population_covariance() @ a == pytest.approx(1.0, rel=1e-12)

    def test_dependent_directions_rejected(self, spec):
        a = spec.true_directions[:, 0]
        with pytest.raises(ValueError, match="linearly independent"):
            synth.SynthSpec(spec.basis, np.column_stack([a, 2 * a]), spec.covariance_spectrum, 10)

    @pytest.mark.parametrize("spectrum", [[1.0, 2.0], [1.0, 0.0], [1.0, -1.0]])
    def test_bad_spectrum(self, spec, spectrum):
        with pytest.raises(ValueError, match="spectrum"):
            synth.SynthSpec(spec.basis, spec.true_directions, spectrum, 10)

    def test_product_needs_two(self, spec):
        with pytest.raises(ValueError, match="two directions"):
            synth.SynthSpec(spec.basis, spec.true_directions, spec.covariance_spectrum, 10, link="product")

    def test_frame_is_g_orthonormal_and_ordered(self, spec):
        F, rough = synth.smooth_frame(spec.basis)
        np.testing.assert_allclose(F.T @ gram_matrix(spec.basis) @ F, np.eye(F.shape[1]), atol=1e-9)
        assert np.all(np.diff(rough) >= 0)
        # the two affine functions carry no roughness
        assert rough[1] <= 1e-8 * rough[-1]


class TestGenerate:
    def test_noiseless_linear_is_inner_product(self, spec):
        s = synth.default_spec(30, seed=2, noise_sd=0.0)
        data, truth = synth.generate(s)
        # dense trapezoid quadrature of <X, a1> from reconstructed functions
        t = np.linspace(0.0, 10.0, 200_001)
        X = reconstruct(s.basis, truth.coeffs, t)
        a = reconstruct(s.basis, s.true_directions[:, 0][None, :], t)[0]
        ip = trapezoid(X * a, t, axis=1)
        np.testing.assert_allclose(data.response, ip, rtol=1e-6, atol=1e-8)

    def test_spectrum_recovered(self):
        s = synth.default_spec(10_000, seed=3)
        data, truth = synth.generate(s)
        G = gram_matrix(s.basis)
        Sigma = np.cov(truth.coeffs, rowvar=False)
        w = scipy.linalg.eigh(G @ Sigma @ G, G, eigvals_only=True)[::-1]
        np.testing.assert_allclose(w[:5], s.covariance_spectrum[:5], rtol=0.05)

    def test_seed_determinism(self, spec):
        a, _ = synth.generate(spec)
        b, _ = synth.generate(spec)
        assert np.array_equal(a.curves, b.curves) and np.array_equal(a.response, b.response)

    def test_curves_match_coefficients(self, spec):
        data, truth = synth.generate(spec)
        np.testing.assert_allclose(project_curves(spec.basis, data.grid, data.curves), truth.coeffs, atol=1e-9)

    def test_classification_balanced(self):
        s = synth.default_spec(6000, seed=4, task="classification", n_classes=3)
        data, _ = synth.generate(s)
        counts = np.bincount(data.response)[1:]
        np.testing.assert_allclose(counts / 6000, [1 / 3] * 3, atol=0.03)

    @pytest.mark.parametrize("link", ["sine", "product"])
    def test_links(self, link):
        s = synth.default_spec(50, seed=5, link=link, noise_sd=0.0, q_true=2)
        data, truth = synth.generate(s)
        S = truth.scores
        expected = np.sin(S[:, 0]) + S[:, 1] if link == "sine" else S[:, 0] * S[:, 1]
        np.testing.assert_allclose(data.response, expected, atol=1e-12)

    def test_linearity_condition(self):
        """E(<u, X> | scores) is linear: a cubic fit explains no more than a linear one."""
        s = synth.default_spec(10_000, seed=6)
        _, truth = synth.generate(s)
        G = gram_matrix(s.basis)
        rng = np.random.default_rng(0)
        sc = truth.scores[:, 0]
        lin = np.column_stack([np.ones_like(sc), sc])
        cub = np.column_stack([lin, sc**2, sc**3])
        for _ in range(10):
            u = s.true_directions[:, 0] + rng.normal(size=s.basis.n_basis)
            z = truth.coeffs @ G @ u

            def r2(X):
                res = z - X @ np.linalg.lstsq(X, z, rcond=None)[0]
                return 1 - res.var() / z.var()

            assert r2(lin) >= 0.99 * r2(cub)


class TestGammaMetricError:
    @pytest.fixture
    def setup(self):
        rng = np.random.default_rng(7)
        Z = rng.normal(size=(8, 8))
        return Z @ Z.T + np.eye(8), rng.normal(size=8)

    def test_identity(self, setup):
        M, a = setup
        assert synth.gamma_metric_error(a, a, M) == pytest.approx(0.0, abs=1e-15)

    def test_sign_and_scale_invariant(self, setup):
        M, a = setup
        assert synth.gamma_metric_error(-3.0 * a, a, M) == pytest.approx(0.0, abs=1e-14)

    def test_orthogonal_is_infinite(self, setup):
        M, a = setup
        b = np.linalg.solve(M, np.eye(8)[0])
        b -= (b @ M @ a) / (a @ M @ a) * a
        assert synth.gamma_metric_error(b, a, M) == np.inf

    def test_first_order_expansion(self, setup):
        M, a = setup
        t = a / np.sqrt(a @ M @ a)
        d = np.random.default_rng(8).normal(size=8)
        d -= (d @ M @ t) * t  # keeps <M est, truth> = 1
        for eps in (1e-2, 1e-3):
            assert synth.gamma_metric_error(t + eps * d, a, M) == pytest.approx(eps**2 * d @ M @ d, rel=1e-9)

    def test_accepts_model(self, spec):
        data, truth = synth.generate(spec)
        ops, cc, _ = est.build_operators(data, spec.basis)
        model = edr.fit_edr(ops, 0.1, 1, cc.mean_coeffs, spec.basis)
        assert synth.gamma_metric_error(model, truth.directions[:, 0], ops.M_X) < 0.05


class TestConsistencyStudy:
    def template(self, N, seed):
        return synth.default_spec(N, seed=seed, noise_sd=0.1)

    def test_rerun_identical(self):
        a = synth.consistency_study(self.template, [50, 100], 0.5, replicates=3, seed=1)
        b = synth.consistency_study(self.template, [50, 100], 0.5, replicates=3, seed=1)
        assert a == b

    def test_oversmoothing_plateau(self):
        rule = synth.consistency_study(self.template, [100, 400, 1600], 0.5, replicates=5, seed=2)
        huge = synth.consistency_study(self.template, [100, 400, 1600], lambda n: 1e3, replicates=5, seed=2)
        assert huge["medians"][1600] > 10 * rule["medians"][1600]
        assert huge["medians"][1600] > 0.5 * huge["medians"][400]

    def test_validation(self):
        with pytest.raises(ValueError, match="ascending"):
            synth.consistency_study(self.template, [100, 50], 0.5, replicates=3)
        with pytest.raises(ValueError, match="replicates"):
            synth.consistency_study(self.template, [50], 0.5, replicates=2)

    def test_write(self, tmp_path):
        study = synth.consistency_study(self.template, [50, 100], 0.5, replicates=3, seed=0)
        synth.write_study(study, tmp_path / "s.csv", tmp_path / "s.json")
        rows = (tmp_path / "s.csv").read_text().splitlines()
        assert rows[0] == "N,replicate,alpha,error" and len(rows) == 7
        assert json.loads((tmp_path / "s.json").read_text())["medians"]["50"] == study["medians"][50]


def test_select_alpha_interior_optimum():
    basis = make_basis((0.0, 10.0), 30, 4)
    data, _ = synth.generate(synth.default_spec(60, seed=1, basis=basis, noise_sd=0.1))
    grid = np.logspace(-4, 2, 13)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        best, table = edr.select_alpha(data, basis, grid, 1, seed=0)
    errors = [e for _, e in table]
    assert grid[0] < best < grid[-1]
    assert min(errors) < 0.95 * min(errors[0], errors[-1])
