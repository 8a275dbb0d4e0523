import numpy as np
import pytest

from spspca import penalty as pen
from spspca.errors import EmptyDomain, InvalidConfig, KTooLarge
from spspca.linalg import CovarianceInput, center_columns, gram, principal_angles, spectral_decompose
from spspca.simulate import gen_lowdim, lowdim_population_covariance
from spspca.solver import closed_form_ridge, lambda_max, SppcsoProblem
from spspca.spca import (
    SpcaConfig,
    a_step,
    b_step,
    fit,
    fit_sp_spca,
    fit_spca_baseline,
    init_A,
    normalize_loadings,
    select_theta,
    sp_spca_objective,
)

from conftest import random_psd


def random_data(rng, n=40, p=8):
    return center_columns(rng.standard_normal((n, p)) @ rng.standard_normal((p, p)))


class TestConfig:
    def test_exactly_one_sparsity(self):
        with pytest.raises(InvalidConfig):
            SpcaConfig(k=2)
        with pytest.raises(InvalidConfig):
            SpcaConfig(k=2, lambdas=[0, 0], cardinality=[1, 1])

    def test_broadcast(self):
        assert SpcaConfig(k=3, cardinality=[4]).cardinality == [4, 4, 4]
        assert SpcaConfig(k=2, lambdas=0.5).lambdas == [0.5, 0.5]
        with pytest.raises(InvalidConfig):
            SpcaConfig(k=3, cardinality=[4, 4])

    def test_theta_values(self):
        with pytest.raises(InvalidConfig):
            SpcaConfig(k=1, lambdas=[0], theta="best")
        assert SpcaConfig(k=1, lambdas=[0], theta="auto").theta == "auto"

    def test_baseline_flag(self):
        assert SpcaConfig(k=1, lambdas=[0], baseline_lambda2=0.1).baseline


class TestInitA:
    def test_diag(self):
        m = spectral_decompose(np.diag([4.0, 0.25]))
        np.testing.assert_array_equal(init_A(m, 1), [[1.0], [0.0]])
        np.testing.assert_array_equal(init_A(m, 2), m.V)

    def test_orthonormal(self, rng):
        m = spectral_decompose(random_psd(rng, 8))
        A = init_A(m, 3)
        np.testing.assert_allclose(A.T @ A, np.eye(3), atol=1e-12)

    def test_too_large(self):
        with pytest.raises(KTooLarge):
            init_A(spectral_decompose(np.eye(2)), 3)


class TestBStep:
    def test_ridge_columns(self, rng):
        X = random_data(rng)
        G = gram(X)
        m = spectral_decompose(G)
        K = rng.uniform(0.5, 5.0, m.p)
        Z = pen.build_Z(m, K)
        A = init_A(m, 2) + 0.1 * rng.standard_normal((m.p, 2))
        B, lams, _ = b_step(X.values, Z, A, lambdas=[0.0, 0.0])
        np.testing.assert_allclose(B, closed_form_ridge(m, K, G, A), atol=1e-6)
        np.testing.assert_array_equal(lams, 0.0)

    def test_lambda_max_zeroes(self, rng):
        X = random_data(rng)
        m = spectral_decompose(gram(X))
        Z = pen.build_Z(m, np.ones(m.p))
        A = init_A(m, 2)
        lmax = [lambda_max(SppcsoProblem(X.values, X.values @ A[:, j], Z)) for j in range(2)]
        B, _, _ = b_step(X.values, Z, A, lambdas=lmax)
        np.testing.assert_array_equal(B, 0.0)

    def test_cardinality(self, rng):
        X = random_data(rng)
        m = spectral_decompose(gram(X))
        Z = pen.build_Z(m, np.ones(m.p))
        B, lams, _ = b_step(X.values, Z, init_A(m, 2), cardinality=[3, 5])
        assert list(np.count_nonzero(B, axis=0)) == [3, 5]
        assert np.all(lams > 0)


class TestAStep:
    def test_aligned(self, rng):
        B, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        np.testing.assert_allclose(a_step(np.eye(5), B), B, atol=1e-12)

    def test_single_column(self, rng):
        G = random_psd(rng, 4)
        b = rng.standard_normal((4, 1))
        v = G @ b
        np.testing.assert_allclose(a_step(G, b), v / np.linalg.norm(v), atol=1e-12)

    def test_beats_random_orthonormal(self, rng):
        G = random_psd(rng, 6)
        B = rng.standard_normal((6, 2))
        A = a_step(G, B)
        best = np.trace(A.T @ G @ B)
        for _ in range(1000):
            Q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
            assert np.trace(Q.T @ G @ B) <= best + 1e-10

    def test_degenerate_column(self, rng):
        G = random_psd(rng, 5)
        B = np.zeros((5, 2))
        B[:, 0] = rng.standard_normal(5)
        A = a_step(G, B)
        np.testing.assert_allclose(A.T @ A, np.eye(2), atol=1e-10)

    def test_zero_B(self):
        with pytest.raises(ValueError):
            a_step(np.eye(3), np.zeros((3, 2)))


class TestNormalize:
    def test_values(self):
        out = normalize_loadings(np.array([[3.0, 0.0], [4.0, 0.0], [0.0, 0.0]]))
        np.testing.assert_allclose(out, [[0.6, 0], [0.8, 0], [0, 0]])

    def test_equal_entries(self):
        out = normalize_loadings(np.array([[2.0], [2.0], [2.0], [2.0], [0.0]]))
        np.testing.assert_allclose(out[:4, 0], 0.5)

    def test_sign(self):
        out = normalize_loadings(np.array([[-3.0], [1.0]]))
        assert out[0, 0] > 0


class TestFit:
    def test_lambda_zero_is_pca(self, rng):
        X = random_data(rng, p=10)
        m = spectral_decompose(gram(X))
        f = fit_sp_spca(X, SpcaConfig(k=3, lambdas=[0.0] * 3, rescale=True))
        assert principal_angles(f.V_tilde, m.V[:, :3]).max() < 1e-6
        for j in range(3):
            v = m.V[:, j]
            assert min(np.abs(f.V_tilde[:, j] - v).max(), np.abs(f.V_tilde[:, j] + v).max()) < 1e-6

    def test_empty_domain_without_rescale(self, rng):
        X = random_data(rng)
        with pytest.raises(EmptyDomain):
            fit_sp_spca(center_columns(100 * X.values), SpcaConfig(k=2, lambdas=[0, 0]))

    def test_invariants(self, rng):
        X = random_data(rng, n=60, p=12)
        f = fit_sp_spca(X, SpcaConfig(k=3, lambdas=[2.0, 2.0, 2.0], rescale=True))
        np.testing.assert_allclose(f.A.T @ f.A, np.eye(3), atol=1e-8)
        norms = np.linalg.norm(f.V_tilde, axis=0)
        assert np.all((np.abs(norms - 1) < 1e-12) | (norms == 0))
        np.testing.assert_array_equal(f.nnz_per_component, np.count_nonzero(np.abs(f.B) > 0, axis=0))

    def test_objective_nonincreasing_lambda_mode(self, rng):
        X = random_data(rng, n=60, p=12)
        cfg = SpcaConfig(k=2, lambdas=[1.0, 1.0], rescale=True, inner_tol=1e-12, outer_tol=1e-10)
        f = fit_sp_spca(X, cfg)
        h = np.array(f.history)
        assert np.all(np.diff(h) <= 1e-10 * np.abs(h[:-1]))

    def test_deterministic(self, rng):
        X = random_data(rng, n=50, p=10)
        cfg = SpcaConfig(k=2, cardinality=[4, 4], rescale=True)
        a, b = fit_sp_spca(X, cfg), fit_sp_spca(X, cfg)
        assert np.array_equal(a.B, b.B) and np.array_equal(a.A, b.A)

    def test_single_spike(self):
        # one dominant variable and a heavy penalty: loading concentrates on it
        sigma = CovarianceInput(np.diag([10.0, 1.0, 0.5]) + 0.05)
        f = fit_sp_spca(sigma, SpcaConfig(k=1, cardinality=[1], rescale=True))
        np.testing.assert_allclose(f.V_tilde[:, 0], [1, 0, 0])
        # brute force over single-spike candidates
        best = max(range(3), key=lambda i: sigma.sigma[i, i])
        assert np.argmax(np.abs(f.V_tilde[:, 0])) == best

    def test_lowdim_population(self):
        f = fit_sp_spca(lowdim_population_covariance(), SpcaConfig(k=2, cardinality=[4, 4], rescale=True))
        assert set(np.flatnonzero(f.V_tilde[:, 0])) == {4, 5, 6, 7}
        assert set(np.flatnonzero(f.V_tilde[:, 1])) == {0, 1, 2, 3}
        np.testing.assert_allclose(f.V_tilde[f.V_tilde != 0], 0.5, atol=0.05)
        assert 70 <= f.variance.cumulative <= 80

    def test_lowdim_sample_baseline_same_supports(self):
        X = gen_lowdim(2000, seed=3)
        cfg = SpcaConfig(k=2, cardinality=[4, 4], rescale=True)
        sp = fit_sp_spca(X, cfg)
        base = fit_spca_baseline(X, cfg)
        np.testing.assert_array_equal(sp.V_tilde != 0, base.V_tilde != 0)
        assert set(np.flatnonzero(sp.V_tilde[:, 0])) == {4, 5, 6, 7}
        assert not np.allclose(sp.V_tilde, base.V_tilde)

    def test_baseline_lambda_zero_is_pca(self, rng):
        X = random_data(rng)
        m = spectral_decompose(gram(X))
        f = fit_spca_baseline(X, SpcaConfig(k=2, lambdas=[0.0, 0.0], baseline_lambda2=0.0))
        assert principal_angles(f.V_tilde, m.V[:, :2]).max() < 1e-6

    def test_fit_dispatch(self, rng):
        X = random_data(rng)
        assert fit(X, SpcaConfig(k=1, cardinality=[2], baseline=True)).method == "spca"
        assert fit(X, SpcaConfig(k=1, cardinality=[2], rescale=True)).method == "sp-spca"

    def test_select_theta(self, rng):
        X = random_data(rng, n=60, p=10)
        cfg = SpcaConfig(k=2, cardinality=[4, 4], rescale=True, theta="auto")
        best, scores = select_theta(X, cfg)
        assert len(scores) == 9
        assert best.variance.cumulative == max(s for _, s in scores)
        assert fit_sp_spca(X, cfg).theta == best.theta

    def test_collapsed_component(self, rng):
        X = random_data(rng)
        f = fit_sp_spca(X, SpcaConfig(k=2, cardinality=[3, 0], rescale=True))
        assert list(f.nnz_per_component) == [3, 0]
        assert f.variance.per_component_pct[1] == 0.0
        np.testing.assert_allclose(f.A.T @ f.A, np.eye(2), atol=1e-8)

    def test_objective_formula(self, rng):
        X = random_data(rng)
        G = gram(X)
        Z = rng.standard_normal((8, 8))
        A, _ = np.linalg.qr(rng.standard_normal((8, 2)))
        B = rng.standard_normal((8, 2))
        lams = np.array([0.3, 0.7])
        direct = np.sum((X.values - X.values @ B @ A.T) ** 2) + np.sum((Z @ B) ** 2) + np.sum(lams * np.abs(B).sum(0))
        assert sp_spca_objective(G, Z, A, B, lams) == pytest.approx(direct, rel=1e-10)
