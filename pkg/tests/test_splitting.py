"""Alternating-direction solver tests.

The random QP fixture carries an exact KKT solution from a dense solve,
so fixed-point, convergence, and certificate checks all compare against
that independent oracle. The weighting operators are pinned to a
hand-computed 3x3 matrix and cross-checked against their dense forms.
"""

import math
import warnings

import numpy as np
import pytest

from iprox import splitting as sp
from iprox.fixtures import random_qp
from iprox.numkit import SeededRng
from iprox.prox import l1_oracle
from iprox.vi_core import InertialSchedule, run_inertial_ppa


def tiny_qp(seed=100, n1=3, n2=3, m=2):
    return random_qp(n1, n2, m, SeededRng(seed))


def safe_params(prob, beta=1.0, frac=0.9):
    return sp.LadmmParams(
        beta=beta, tau=frac / prob.rho_ata, eta=frac / prob.rho_btb
    )


def consensus_problem():
    # min |x|_1 + 2 |y|_1  s.t.  x + y = b, identity couplings
    return sp.SeparableProblem(
        A=np.eye(2),
        B=np.eye(2),
        b=np.array([1.0, -2.0]),
        f_prox=l1_oracle(1.0),
        g_prox=l1_oracle(2.0),
    )


class TestSeparableProblem:
    def test_dimensions_and_values(self):
        prob, _ = tiny_qp()
        assert (prob.n1, prob.n2, prob.m) == (3, 3, 2)
        x, y = np.ones(3), np.ones(3)
        assert np.allclose(
            prob.feasibility(x, y), prob.A @ x + prob.B @ y - prob.b
        )
        Pf, cf = prob.f_quad
        Pg, cg = prob.g_quad
        want = 0.5 * x @ Pf @ x + cf @ x + 0.5 * y @ Pg @ y + cg @ y
        assert prob.objective(x, y) == pytest.approx(want, abs=1e-12)

    def test_spectral_radii_match_singular_values(self):
        prob, _ = tiny_qp()
        assert prob.rho_ata == pytest.approx(
            np.linalg.svd(prob.A, compute_uv=False)[0] ** 2, abs=1e-12
        )
        assert prob.rho_btb == pytest.approx(
            np.linalg.svd(prob.B, compute_uv=False)[0] ** 2, abs=1e-12
        )

    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sp.SeparableProblem(
                A=np.zeros((2, 2)),
                B=np.zeros((3, 2)),
                b=np.zeros(2),
                f_prox=l1_oracle(),
                g_prox=l1_oracle(),
            )


class TestPrimalDualPoint:
    def test_pack_unpack_roundtrip(self):
        pt = sp.PrimalDualPoint(np.array([1.0, 2.0]), np.array([3.0]), np.array([4.0, 5.0]))
        back = sp.PrimalDualPoint.unpack(pt.pack(), 2, 1)
        assert np.array_equal(back.x, pt.x)
        assert np.array_equal(back.y, pt.y)
        assert np.array_equal(back.p, pt.p)

    def test_copy_is_independent(self):
        pt = sp.PrimalDualPoint(np.zeros(2), np.zeros(2), np.zeros(1))
        cp = pt.copy()
        cp.x[0] = 7.0
        assert pt.x[0] == 0.0

    def test_zeros_point(self):
        prob, _ = tiny_qp()
        z = sp.zeros_point(prob)
        assert z.pack().shape == (prob.n1 + prob.n2 + prob.m,)
        assert not z.pack().any()


class TestLadmmParams:
    def test_positivity(self):
        for bad in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)]:
            with pytest.raises(ValueError):
                sp.LadmmParams(*bad)


class TestWeightings:
    def test_hand_computed_matrix(self):
        # n1 = n2 = m = 1, A = B = [1], beta = 1, tau = eta = 1/2:
        # G = [[beta (1/tau - 1), 0, 0], [0, beta/eta, -1], [0, -1, 1/beta]]
        prob = sp.SeparableProblem(
            A=np.array([[1.0]]),
            B=np.array([[1.0]]),
            b=np.array([0.0]),
            f_prox=l1_oracle(),
            g_prox=l1_oracle(),
        )
        params = sp.LadmmParams(beta=1.0, tau=0.5, eta=0.5)
        G = sp.gladmm_operator(prob, params)
        want = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        assert np.allclose(G.materialize(), want, atol=1e-15)
        w = np.ones(3)
        assert G.quad(w) == pytest.approx(2.0, abs=1e-15)
        assert np.allclose(G.apply(w), want @ w, atol=1e-15)

    def test_matrix_free_matches_dense(self):
        prob, _ = tiny_qp()
        params = safe_params(prob, beta=0.7)
        rng = np.random.default_rng(0)
        for G in (sp.gladmm_operator(prob, params), sp.gadmm_operator(prob, 0.7)):
            Gm = G.materialize()
            for _ in range(10):
                w = rng.normal(size=Gm.shape[0])
                assert np.abs(G.apply(w) - Gm @ w).max() < 1e-12
                assert G.quad(w) == pytest.approx(w @ Gm @ w, abs=1e-10)

    def test_linearized_weighting_positive_definite(self):
        prob, _ = tiny_qp()
        G = sp.gladmm_operator(prob, safe_params(prob))
        eigs = np.linalg.eigvalsh(G.materialize())
        assert eigs.min() > 0

    def test_exact_weighting_degenerate_on_x(self):
        prob, _ = tiny_qp()
        G = sp.gadmm_operator(prob, 1.0)
        w = np.concatenate([np.ones(prob.n1), np.zeros(prob.n2 + prob.m)])
        assert G.quad(w) == 0.0
        eigs = np.linalg.eigvalsh(G.materialize())
        assert eigs.min() > -1e-12

    def test_step_bound_warnings(self):
        prob, _ = tiny_qp()
        with pytest.warns(UserWarning, match="indefinite"):
            sp.gladmm_operator(
                prob, sp.LadmmParams(1.0, 2.0 / prob.rho_ata, 0.5 / prob.rho_btb)
            )
        with pytest.warns(UserWarning, match="semidefinite"):
            sp.gladmm_operator(
                prob, sp.LadmmParams(1.0, 1.0 / prob.rho_ata, 0.5 / prob.rho_btb)
            )
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            sp.gladmm_operator(prob, safe_params(prob))

    def test_exact_weighting_rejects_bad_beta(self):
        prob, _ = tiny_qp()
        with pytest.raises(ValueError):
            sp.gadmm_operator(prob, 0.0)


class TestMixedViForm:
    def test_f_is_skew_monotone(self):
        prob, _ = tiny_qp()
        vi = sp.to_mixed_vi(prob)
        rng = np.random.default_rng(1)
        for _ in range(20):
            u = rng.normal(size=vi.dim)
            v = rng.normal(size=vi.dim)
            assert abs((u - v) @ (vi.F(u) - vi.F(v))) < 1e-10

    def test_saddle_point_solves_vi(self):
        prob, star = tiny_qp()
        vi = sp.to_mixed_vi(prob)
        # at the KKT point: theta(w) - theta(w*) + <w - w*, F(w*)> >= 0
        rng = np.random.default_rng(2)
        s = star.pack()
        base = vi.F(s)
        for _ in range(50):
            w = s + rng.normal(size=vi.dim) * 2.0
            assert vi.theta(w) - vi.theta(s) + (w - s) @ base >= -1e-8

    def test_resolvent_needs_quadratic_data(self):
        vi = sp.to_mixed_vi(consensus_problem())
        with pytest.raises(sp.ExactSubproblemError):
            vi.resolvent(np.zeros(vi.dim), 1.0, None)


class TestSteps:
    def test_fixed_point_of_linearized_step(self):
        prob, star = tiny_qp()
        out = sp.ladmm_step(prob, safe_params(prob), star)
        assert np.abs(out.pack() - star.pack()).max() < 1e-9

    def test_fixed_point_of_exact_step(self):
        prob, star = tiny_qp()
        out = sp.admm_step(prob, 1.3, star)
        assert np.abs(out.pack() - star.pack()).max() < 1e-9

    def test_zero_alpha_is_bitwise_plain(self):
        prob, _ = tiny_qp()
        params = safe_params(prob)
        rng = np.random.default_rng(3)
        w = sp.PrimalDualPoint(
            rng.normal(size=3), rng.normal(size=3), rng.normal(size=2)
        )
        w_prev = sp.PrimalDualPoint(
            rng.normal(size=3), rng.normal(size=3), rng.normal(size=2)
        )
        plain = sp.ladmm_step(prob, params, w)
        wbar, inertial = sp.iladmm_step(prob, params, w, w_prev, 0.0)
        assert np.array_equal(wbar.pack(), w.pack())
        assert np.array_equal(plain.pack(), inertial.pack())

    def test_extrapolation_covers_all_blocks(self):
        prob, _ = tiny_qp()
        w = sp.zeros_point(prob)
        w_prev = sp.PrimalDualPoint(
            -np.ones(prob.n1), -np.ones(prob.n2), -np.ones(prob.m)
        )
        wbar, _ = sp.iladmm_step(prob, safe_params(prob), w, w_prev, 0.5)
        assert np.allclose(wbar.x, 0.5)
        assert np.allclose(wbar.y, 0.5)
        assert np.allclose(wbar.p, 0.5)

    def test_negative_alpha_rejected(self):
        prob, _ = tiny_qp()
        w = sp.zeros_point(prob)
        with pytest.raises(ValueError):
            sp.iladmm_step(prob, safe_params(prob), w, w, -0.1)

    def test_exact_step_identity_coupling_path(self):
        prob = consensus_problem()
        w1 = sp.admm_step(prob, 2.0, sp.zeros_point(prob))
        # x-update from zeros: prox of b at threshold 1/beta
        assert np.allclose(
            w1.x, np.sign(prob.b) * np.maximum(np.abs(prob.b) - 0.5, 0.0)
        )

    def test_exact_step_requires_closed_form(self):
        prob = consensus_problem()
        prob.A = np.array([[2.0, 0.0], [0.0, 2.0]])
        with pytest.raises(sp.ExactSubproblemError):
            sp.admm_step(prob, 1.0, sp.zeros_point(prob))
        with pytest.raises(ValueError):
            sp.admm_step(consensus_problem(), 0.0, sp.zeros_point(prob))


class TestProximalEquivalence:
    def test_linearized_step_is_resolvent_step(self):
        # one linearized step from any point equals the exact resolvent of
        # the optimality VI under the linearized weighting with lam = 1
        prob, _ = tiny_qp()
        params = safe_params(prob)
        vi = sp.to_mixed_vi(prob)
        G = sp.gladmm_operator(prob, params)
        rng = np.random.default_rng(4)
        for _ in range(5):
            w = rng.normal(size=vi.dim)
            via_vi = vi.resolvent(w, 1.0, G)
            via_step = sp.ladmm_step(
                prob, params, sp.PrimalDualPoint.unpack(w, prob.n1, prob.n2)
            )
            assert np.abs(via_vi - via_step.pack()).max() < 1e-10

    def test_trajectories_coincide(self):
        prob, _ = tiny_qp()
        params = safe_params(prob)
        vi = sp.to_mixed_vi(prob)
        G = sp.gladmm_operator(prob, params)
        engine = run_inertial_ppa(
            vi, G, InertialSchedule.constant(0.0),
            np.zeros(vi.dim), tol=0.0, max_iter=50,
        )
        direct = sp.run_ladmm(prob, params, tol=0.0, max_iter=50)
        worst = max(
            np.abs(a - b).max()
            for a, b in zip(engine.iterates, direct.iterates)
        )
        assert worst < 1e-10


class TestRuns:
    def test_plain_run_reaches_kkt_solution(self):
        prob, star = tiny_qp()
        trace = sp.run_ladmm(prob, safe_params(prob), tol=1e-10, max_iter=5000)
        assert trace.converged
        assert np.abs(trace.iterates[-1] - star.pack()).max() < 1e-7
        final = trace.extras["final"]
        assert np.array_equal(final.pack(), trace.iterates[-1])

    def test_inertial_run_reaches_kkt_solution(self):
        prob, star = tiny_qp()
        trace = sp.run_iladmm(
            prob, safe_params(prob), InertialSchedule.constant(0.28),
            tol=1e-10, max_iter=5000,
        )
        assert trace.converged
        assert np.abs(trace.iterates[-1] - star.pack()).max() < 1e-7

    def test_zero_alpha_run_is_bitwise_plain(self):
        prob, _ = tiny_qp()
        params = safe_params(prob)
        plain = sp.run_ladmm(prob, params, tol=0.0, max_iter=40)
        inertial = sp.run_iladmm(
            prob, params, InertialSchedule.constant(0.0), tol=0.0, max_iter=40,
        )
        for a, b in zip(plain.iterates, inertial.iterates):
            assert np.array_equal(a, b)

    def test_distance_contraction(self):
        # phi_{k+1} <= phi_k - ||w_{k+1} - w_k||_G^2 on the plain iteration
        prob, star = tiny_qp(seed=101)
        trace = sp.run_ladmm(
            prob, safe_params(prob), tol=0.0, max_iter=300, w_star=star,
        )
        phi = np.asarray(trace.phi)
        res = np.asarray(trace.step_residuals)
        assert np.all(phi[1:] <= phi[:-1] - res + 1e-10)

    def test_trace_lengths(self):
        prob, star = tiny_qp()
        trace = sp.run_ladmm(
            prob, safe_params(prob), tol=0.0, max_iter=15, w_star=star,
        )
        assert trace.iterations == 15
        assert len(trace.iterates) == 16
        assert len(trace.phi) == 16
        assert len(trace.step_residuals) == 15
        assert all(a == 0.0 for a in trace.alphas)


class TestCertificates:
    def test_step_variational_slack(self):
        prob, star = tiny_qp()
        params = safe_params(prob)
        rng = np.random.default_rng(5)
        w = sp.PrimalDualPoint(
            rng.normal(size=3), rng.normal(size=3), rng.normal(size=2)
        )
        w1 = sp.ladmm_step(prob, params, w)
        probes = sp.sample_probes(prob, star, 3.0, 100, SeededRng(6))
        assert sp.vi_residual_check(prob, params, w, w1, probes) >= -1e-8

    def test_ergodic_gap_certificate(self):
        prob, star = tiny_qp()
        params = safe_params(prob)
        trace = sp.run_ladmm(prob, params, tol=0.0, max_iter=220)
        probes = sp.sample_probes(prob, star, 2.0, 25, SeededRng(7))
        report = sp.ergodic_report(trace, prob, params, probes, ks=[50, 100, 200])
        assert report.ok and report.violations == []
        for k in report.ks:
            assert len(report.gaps[k]) == 25

    def test_ergodic_report_validation(self):
        prob, star = tiny_qp()
        params = safe_params(prob)
        trace = sp.run_ladmm(prob, params, tol=0.0, max_iter=10)
        probes = sp.sample_probes(prob, star, 1.0, 2, SeededRng(8))
        with pytest.raises(ValueError):
            sp.ergodic_report(trace, prob, params, probes, ks=[50])
        trace.iterates = None
        with pytest.raises(ValueError):
            sp.ergodic_report(trace, prob, params, probes, ks=[5])

    def test_nonergodic_certificate(self):
        # small penalty keeps the residual decay slow enough that the
        # whole trace stays above rounding noise
        prob, star = random_qp(4, 4, 3, SeededRng(20240814).derive("qp"))
        params = sp.LadmmParams(
            beta=0.1, tau=0.9 / prob.rho_ata, eta=0.9 / prob.rho_btb
        )
        trace = sp.run_ladmm(prob, params, tol=0.0, max_iter=500, w_star=star)
        report = sp.nonergodic_report(trace, prob, params, star)
        assert report.ok
        assert report.monotonicity_violations == []
        assert report.bound_violations == []
        assert np.all(report.scaled <= report.phi0 + 1e-8)
        # the scaled residual keeps falling: o(1/k), not just O(1/k)
        assert report.scaled[499] < report.scaled[49]

    def test_nonergodic_rejects_inertial_trace(self):
        prob, star = tiny_qp()
        params = safe_params(prob)
        trace = sp.run_iladmm(
            prob, params, InertialSchedule.constant(0.2), tol=0.0, max_iter=10,
        )
        with pytest.raises(ValueError):
            sp.nonergodic_report(trace, prob, params, star)


class TestLagrangians:
    def test_hand_values(self):
        prob = consensus_problem()
        x, y, p = np.array([1.0, 0.0]), np.array([0.0, -1.0]), np.array([2.0, 1.0])
        r = x + y - prob.b  # identity couplings
        want = 1.0 + 2.0 - float(p @ r)  # |x|_1 + 2 |y|_1 - <p, r>
        assert sp.lagrangian(prob, x, y, p) == pytest.approx(want, abs=1e-12)
        assert sp.aug_lagrangian(prob, x, y, p, 2.0) == pytest.approx(
            want + float(r @ r), abs=1e-12
        )
