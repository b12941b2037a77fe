"""Shrinkage-operator and proximal-oracle tests.

Soft thresholding is checked against a brute-force scalar minimizer and
singular value thresholding against both its spectrum identity and an
objective-comparison oracle, keeping every check independent of the
implementation under test.
"""

import numpy as np
import pytest

from iprox import prox
from iprox.numkit import svd


def scalar_prox_oracle(v, kappa, width=3.0, points=200001):
    """Brute-force argmin of kappa |x| + 0.5 (x - v)^2 on a fine grid."""
    grid = np.linspace(v - width, v + width, points)
    vals = kappa * np.abs(grid) + 0.5 * (grid - v) ** 2
    return grid[np.argmin(vals)]


def nuclear_norm(M):
    return float(np.linalg.svd(M, compute_uv=False).sum())


class TestSoftThreshold:
    def test_matches_grid_search(self):
        for v in (-2.3, -0.4, 0.0, 0.7, 1.9):
            for kappa in (0.0, 0.3, 1.1):
                got = prox.soft_threshold(np.array([v]), kappa)[0]
                want = scalar_prox_oracle(v, kappa)
                assert abs(got - want) < 1e-4

    def test_exact_form(self):
        v = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
        out = prox.soft_threshold(v, 1.0)
        assert np.array_equal(out, np.array([-1.0, 0.0, 0.0, 0.0, 1.0]))

    def test_zero_threshold_is_identity(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=(4, 5))
        assert np.array_equal(prox.soft_threshold(v, 0.0), v)

    def test_shrinks_toward_zero(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=100)
        out = prox.soft_threshold(v, 0.4)
        assert np.all(np.abs(out) <= np.abs(v) + 1e-15)
        assert np.all(out * v >= 0.0)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            prox.soft_threshold(np.zeros(3), -0.1)


class TestSvt:
    def test_spectrum_identity(self):
        rng = np.random.default_rng(2)
        for shape in [(6, 6), (8, 5)]:
            M = rng.normal(size=shape)
            _, s_in, _ = svd(M)
            out = prox.svt(M, 0.8)
            _, s_out, _ = svd(out)
            want = prox.soft_threshold(s_in, 0.8)
            assert np.abs(np.sort(s_out) - np.sort(want)).max() < 1e-10

    def test_objective_comparison(self):
        # svt must beat random perturbations on kappa ||X||_* + 0.5 ||X-M||_F^2
        rng = np.random.default_rng(3)
        M = rng.normal(size=(7, 6))
        kappa = 0.9
        X = prox.svt(M, kappa)
        base = kappa * nuclear_norm(X) + 0.5 * np.sum((X - M) ** 2)
        for _ in range(50):
            Y = X + rng.normal(size=X.shape) * rng.choice([1e-3, 1e-1, 1.0])
            other = kappa * nuclear_norm(Y) + 0.5 * np.sum((Y - M) ** 2)
            assert base <= other + 1e-10

    def test_svt_with_values_returns_shrunk_spectrum(self):
        rng = np.random.default_rng(4)
        M = rng.normal(size=(5, 5))
        out, shrunk = prox.svt_with_values(M, 0.5)
        _, s_out, _ = svd(out)
        assert np.abs(np.sort(s_out) - np.sort(shrunk)).max() < 1e-10
        assert nuclear_norm(out) == pytest.approx(float(shrunk.sum()), abs=1e-10)

    def test_large_threshold_gives_zero(self):
        rng = np.random.default_rng(5)
        M = rng.normal(size=(4, 4))
        _, s, _ = svd(M)
        assert np.all(prox.svt(M, s[0] + 1.0) == 0.0)


class TestProjectBox:
    def test_clamps_and_broadcasts(self):
        v = np.array([-3.0, 0.5, 4.0])
        out = prox.project_box(v, -1.0, 1.0)
        assert np.array_equal(out, np.array([-1.0, 0.5, 1.0]))
        out = prox.project_box(v, np.array([-5.0, 0.8, 0.0]), 5.0)
        assert np.array_equal(out, np.array([-3.0, 0.8, 4.0]))

    def test_infeasible_box_rejected(self):
        with pytest.raises(ValueError):
            prox.project_box(np.zeros(2), 1.0, -1.0)


class TestOracles:
    def probe_gap(self, oracle, rng, n=6, trials=20):
        worst = np.inf
        for _ in range(trials):
            z = rng.normal(size=n)
            kappa = float(rng.uniform(0.1, 3.0))
            probe = rng.normal(size=n)
            worst = min(worst, prox.prox_objective_gap(oracle, z, kappa, probe))
        return worst

    def test_l1_oracle(self):
        rng = np.random.default_rng(6)
        oracle = prox.l1_oracle(weight=0.7)
        assert self.probe_gap(oracle, rng) >= -1e-10
        w = rng.normal(size=5)
        assert oracle.objective(w) == pytest.approx(0.7 * np.abs(w).sum())

    def test_zero_oracle(self):
        oracle = prox.zero_oracle()
        z = np.array([1.0, -2.0])
        assert np.array_equal(oracle.eval(z, 2.5), z)
        assert oracle.objective(z) == 0.0

    def test_quadratic_oracle_solves_stationarity(self):
        rng = np.random.default_rng(7)
        R = rng.normal(size=(5, 5))
        P = R @ R.T + np.eye(5)
        c = rng.normal(size=5)
        oracle = prox.quadratic_oracle(P, c)
        z = rng.normal(size=5)
        kappa = 0.8
        w = oracle.eval(z, kappa)
        # stationarity: P w + c + (w - z) / kappa = 0
        grad = P @ w + c + (w - z) / kappa
        assert np.abs(grad).max() < 1e-10
        assert oracle.objective(w) == pytest.approx(
            0.5 * w @ P @ w + c @ w, abs=1e-12
        )

    def test_diag_quadratic_oracle_with_bounds(self):
        d = np.array([1.0, 2.0, 0.5])
        c = np.array([0.3, -0.7, 0.0])
        oracle = prox.diag_quadratic_oracle(d, c, lo=-0.2, hi=0.2)
        z = np.array([5.0, -5.0, 0.01])
        w = oracle.eval(z, 1.0)
        assert np.all(w >= -0.2 - 1e-15) and np.all(w <= 0.2 + 1e-15)
        # interior coordinates satisfy stationarity, clamped ones sit on the bound
        free = (w > -0.2 + 1e-12) & (w < 0.2 - 1e-12)
        grad = d * w + c + (w - z)
        assert np.abs(grad[free]).max() < 1e-12 if free.any() else True

    def test_box_oracle(self):
        rng = np.random.default_rng(8)
        oracle = prox.box_oracle(-1.0, 2.0)
        z = rng.normal(size=10) * 3
        w = oracle.eval(z, 1.7)
        assert np.array_equal(w, np.clip(z, -1.0, 2.0))
        assert oracle.objective(w) == 0.0

    def test_nuclear_oracle_matrix_shape(self):
        rng = np.random.default_rng(9)
        oracle = prox.nuclear_oracle(weight=1.2)
        Z = rng.normal(size=(5, 4))
        W = oracle.eval(Z, 0.5)
        assert W.shape == Z.shape
        assert oracle.objective(W) == pytest.approx(1.2 * nuclear_norm(W), abs=1e-10)
