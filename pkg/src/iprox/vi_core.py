"""Inertial proximal point engine for mixed variational inequalities.

The problem: find ``w* in Omega`` such that for all ``w in Omega``

    theta(w) - theta(w*) + <w - w*, F(w*)> >= 0,

with ``theta`` convex, ``F`` continuous and monotone, ``Omega`` closed
convex. Each iteration extrapolates ``wbar = w_k + alpha_k (w_k - w_km1)``
and asks the problem's resolvent oracle for the unique ``w`` solving the
regularized inequality

    theta(v) - theta(w) + <v - w, F(w) + G (w - wbar) / lambda_k> >= 0

for all ``v in Omega``, where ``G`` is a positive semidefinite weighting
operator supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

CONSTANT = "constant"
NONDECREASING = "nondecreasing_capped"
SUMMABLE = "summable_guard"

_GUARANTEED_CAP = 1.0 / 3.0


class WeightOperator:
    """Positive semidefinite weighting ``G`` in operator form.

    ``apply(v)`` returns ``G v`` and ``quad(v)`` the quadratic form
    ``<v, G v>``; both must agree to rounding. ``materialize()`` returns a
    dense matrix when the constructor provided one (small fixtures only;
    large operators stay matrix-free).
    """

    def __init__(self, apply, quad, psd=True, materialize=None):
        self._apply = apply
        self._quad = quad
        self.psd = bool(psd)
        self._materialize = materialize

    def apply(self, v):
        return self._apply(np.asarray(v, dtype=np.float64))

    def quad(self, v):
        return float(self._quad(np.asarray(v, dtype=np.float64)))

    def norm(self, v):
        """``sqrt(max(quad(v), 0))``; tiny negative round-off is clipped."""
        return math.sqrt(max(self.quad(v), 0.0))

    def materialize(self):
        if self._materialize is None:
            raise NotImplementedError("this weighting has no dense form")
        return self._materialize()

    @staticmethod
    def identity(scale=1.0):
        if scale < 0:
            raise ValueError("scale must be nonnegative")

        def app(v):
            return scale * v

        def quad(v):
            return scale * float(v @ v)

        return WeightOperator(app, quad, psd=True, materialize=None)

    @staticmethod
    def from_matrix(G):
        Gm = np.asarray(G, dtype=np.float64)
        if Gm.ndim != 2 or Gm.shape[0] != Gm.shape[1]:
            raise ValueError("G must be square")

        def app(v):
            return Gm @ v

        def quad(v):
            return float(v @ (Gm @ v))

        return WeightOperator(app, quad, psd=True, materialize=lambda: Gm.copy())


@dataclass
class MixedViProblem:
    """A mixed variational inequality given through oracles.

    ``resolvent(z, lam, G)`` must return the exact solution of the
    regularized inequality above with ``wbar`` replaced by ``z``; closed
    forms for the shipped fixture families live in :mod:`iprox.fixtures`.
    ``H`` witnesses the monotonicity modulus of ``F`` (``None`` means 0).
    ``project`` maps arbitrary points onto ``Omega`` and is used when
    sampling probe points.
    """

    dim: int
    theta: Callable[[np.ndarray], float]
    F: Callable[[np.ndarray], np.ndarray]
    resolvent: Callable[[np.ndarray, float, WeightOperator], np.ndarray]
    H: Optional[WeightOperator] = None
    omega_contains: Callable[[np.ndarray], bool] = lambda w: True
    project: Callable[[np.ndarray], np.ndarray] = lambda w: w


class InertialSchedule:
    """Extrapolation and step-size schedule for the inertial engine.

    Three kinds:

    - ``constant``: alpha_k = alpha for all k.
    - ``nondecreasing_capped``: alpha_k = alpha_max * (1 - 1/(k + 2)),
      nondecreasing toward the cap.
    - ``summable_guard``: alpha_k = min(alpha_max, C / (k^2 * d_k)) with
      d_k the squared G-norm of the last step (floored at machine eps),
      which keeps sum_k alpha_k * d_k finite for any trajectory.

    The first two kinds with cap below 1/3 are the regime under which the
    O(1/k) and o(1/k) residual guarantees hold; ``guaranteed_regime`` tells
    whether a schedule qualifies. Caps up to (but excluding) 1 are
    accepted so experiment sweeps can probe beyond the guaranteed range.
    """

    def __init__(self, kind, alpha_max, C=1.0, lam=1.0, lam_seq=None):
        if kind not in (CONSTANT, NONDECREASING, SUMMABLE):
            raise ValueError(f"unknown schedule kind {kind!r}")
        if not 0.0 <= alpha_max < 1.0:
            raise ValueError(f"alpha cap must lie in [0, 1), got {alpha_max}")
        if C <= 0:
            raise ValueError("summable-guard constant must be positive")
        if lam <= 0:
            raise ValueError("lambda floor must be positive")
        self.kind = kind
        self.alpha_max = float(alpha_max)
        self.C = float(C)
        self.lambda_floor = float(lam)
        self._lam_seq = lam_seq

    @classmethod
    def constant(cls, alpha, lam=1.0, lam_seq=None):
        return cls(CONSTANT, alpha, lam=lam, lam_seq=lam_seq)

    @classmethod
    def nondecreasing_capped(cls, alpha_max, lam=1.0, lam_seq=None):
        return cls(NONDECREASING, alpha_max, lam=lam, lam_seq=lam_seq)

    @classmethod
    def summable_guard(cls, alpha_max, C=1.0, lam=1.0, lam_seq=None):
        return cls(SUMMABLE, alpha_max, C=C, lam=lam, lam_seq=lam_seq)

    @property
    def guaranteed_regime(self):
        return self.kind in (CONSTANT, NONDECREASING) and self.alpha_max < _GUARANTEED_CAP

    def alpha(self, k, dw_gnorm_sq=0.0):
        """Extrapolation factor for iteration ``k`` (0-based)."""
        if self.kind == CONSTANT:
            return self.alpha_max
        if self.kind == NONDECREASING:
            return self.alpha_max * (1.0 - 1.0 / (k + 2.0))
        return summable_alpha(max(k, 1), dw_gnorm_sq, self.alpha_max, self.C)

    def lam(self, k):
        """Proximal step size for iteration ``k``, at least the floor."""
        if self._lam_seq is None:
            return self.lambda_floor
        val = float(self._lam_seq(k))
        if val < self.lambda_floor:
            raise ValueError(
                f"lambda sequence dipped below its floor at k={k}: "
                f"{val} < {self.lambda_floor}"
            )
        return val


def summable_alpha(k, dw_gnorm_sq, alpha_max, C=1.0):
    """Online guard ``min(alpha_max, C / (k^2 * max(d, eps)))``.

    With ``d`` the squared G-norm of the last displacement this enforces
    ``alpha_k * d <= C / k^2`` for k >= 1, so the weighted displacement
    series is dominated by ``C * pi^2 / 6`` and stays finite.
    """
    if k < 1:
        raise ValueError("summable guard is defined for k >= 1")
    if not 0.0 <= alpha_max < 1.0:
        raise ValueError(f"alpha cap must lie in [0, 1), got {alpha_max}")
    d = max(float(dw_gnorm_sq), np.finfo(np.float64).eps)
    return min(alpha_max, C / (k * k * d))


def hbf_params(h, gamma):
    """Step size and extrapolation factor of the damped-oscillator scheme.

    For an explicit discretization with step ``h`` and friction ``gamma``:
    ``lambda = h^2 / (1 + gamma h)`` and ``alpha = 1 / (1 + gamma h)``.
    Larger friction gives smaller alpha.
    """
    if h <= 0 or gamma <= 0:
        raise ValueError("h and gamma must be positive")
    denom = 1.0 + gamma * h
    return h * h / denom, 1.0 / denom


@dataclass
class SolverTrace:
    """Per-iteration diagnostics shared by the solver loops.

    Lengths: with ``K = iterations``, ``iterates`` and ``phi`` (when
    present) hold K + 1 entries starting at the initial point, while the
    per-step lists hold K entries. ``step_residuals`` are squared G-norms
    of ``w_{k+1} - wbar_k``; ``stop_residuals`` the relative stopping
    quantities; ``delta`` the weighted inertia terms
    ``2 alpha_k ||w_k - w_{k-1}||_G^2``.
    """

    iterates: Optional[list] = None
    alphas: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    step_residuals: list = field(default_factory=list)
    stop_residuals: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    phi: Optional[list] = None
    objective: Optional[list] = None
    extras: dict = field(default_factory=dict)
    converged: bool = False
    iterations: int = 0


def inertial_ppa_step(problem, G, w_k, w_km1, alpha_k, lam_k):
    """One engine step: extrapolate, then resolve.

    Returns ``(wbar, w_next)`` where ``wbar = w_k + alpha_k (w_k - w_km1)``
    and ``w_next`` solves the regularized inequality at ``wbar``.
    """
    if alpha_k < 0:
        raise ValueError("alpha must be nonnegative")
    if lam_k <= 0:
        raise ValueError("lambda must be positive")
    w_k = np.asarray(w_k, dtype=np.float64)
    w_km1 = np.asarray(w_km1, dtype=np.float64)
    wbar = w_k + alpha_k * (w_k - w_km1)
    w_next = problem.resolvent(wbar, lam_k, G)
    return wbar, np.asarray(w_next, dtype=np.float64)


def run_inertial_ppa(problem, G, schedule, w0, tol=1e-5, max_iter=1000,
                     w_star=None, objective=None, keep_iterates=True):
    """Run the inertial engine from ``w0`` (the pre-iterate equals ``w0``).

    Stops when ``||w_next - wbar|| / (1 + ||wbar||) < tol`` or at
    ``max_iter``. When ``w_star`` is given the trace records
    ``phi_k = ||w_k - w*||_G^2``; when ``objective`` is given its values
    are recorded at every iterate.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    w = np.asarray(w0, dtype=np.float64).copy()
    if w.shape != (problem.dim,):
        raise ValueError(f"w0 must have shape ({problem.dim},), got {w.shape}")
    w_prev = w.copy()
    star = None if w_star is None else np.asarray(w_star, dtype=np.float64)

    trace = SolverTrace(
        iterates=[w.copy()] if keep_iterates else None,
        phi=None if star is None else [G.quad(w - star)],
        objective=None if objective is None else [float(objective(w))],
    )
    for k in range(max_iter):
        dw_sq = G.quad(w - w_prev)
        alpha_k = schedule.alpha(k, dw_sq)
        lam_k = schedule.lam(k)
        wbar, w_next = inertial_ppa_step(problem, G, w, w_prev, alpha_k, lam_k)

        trace.alphas.append(alpha_k)
        trace.lambdas.append(lam_k)
        trace.delta.append(2.0 * alpha_k * dw_sq)
        trace.step_residuals.append(G.quad(w_next - wbar))
        rel = float(np.linalg.norm(w_next - wbar)) / (
            1.0 + float(np.linalg.norm(wbar))
        )
        trace.stop_residuals.append(rel)
        if trace.iterates is not None:
            trace.iterates.append(w_next.copy())
        if star is not None:
            trace.phi.append(G.quad(w_next - star))
        if trace.objective is not None:
            trace.objective.append(float(objective(w_next)))

        w_prev, w = w, w_next
        trace.iterations = k + 1
        if rel < tol:
            trace.converged = True
            break
    return trace


def gippa_slack(problem, G, wbar, w_next, lam, probes):
    """Minimum slack of the regularized inequality over probe points.

    For each probe ``w`` evaluates
    ``theta(w) - theta(w_next) + <w - w_next, F(w_next) + G(w_next - wbar)/lam>``
    and returns the smallest value; nonnegative up to rounding when
    ``w_next`` truly solves the subproblem.
    """
    w_next = np.asarray(w_next, dtype=np.float64)
    base = problem.F(w_next) + G.apply(w_next - np.asarray(wbar)) / lam
    t_next = problem.theta(w_next)
    worst = math.inf
    for w in probes:
        w = np.asarray(w, dtype=np.float64)
        slack = problem.theta(w) - t_next + float((w - w_next) @ base)
        worst = min(worst, slack)
    return worst


def check_h_monotonicity(problem, rng, n_pairs=100, radius=10.0, center=None):
    """Smallest value of ``<u - v, F(u) - F(v)> - ||u - v||_H^2`` over
    random pairs projected onto Omega; nonnegative for an H-monotone F."""
    c = np.zeros(problem.dim) if center is None else np.asarray(center)
    worst = math.inf
    for _ in range(n_pairs):
        u = problem.project(c + rng.uniform(-radius, radius, problem.dim))
        v = problem.project(c + rng.uniform(-radius, radius, problem.dim))
        gap = float((u - v) @ (problem.F(u) - problem.F(v)))
        if problem.H is not None:
            gap -= problem.H.quad(u - v)
        worst = min(worst, gap)
    return worst


@dataclass
class RateReport:
    """Outcome of the accelerated-rate residual check.

    ``min_residuals[k-1]`` is ``min_{0<=i<k} ||w_{i+1} - wbar_i||_G^2``,
    ``bounds[k-1]`` the guaranteed envelope ``constant * phi0 / k``, and
    ``scaled[k-1] = k * min_residuals[k-1]`` (should trail off when the
    rate is in fact o(1/k)). ``violations`` lists every k where the
    envelope failed by more than the tolerance.
    """

    ks: np.ndarray
    min_residuals: np.ndarray
    bounds: np.ndarray
    scaled: np.ndarray
    violations: list
    constant: float
    phi0: float
    ok: bool


def check_residual_rate_bound(trace, G, w_star, tol=1e-10):
    """Check the O(1/k) envelope on the best squared step residual.

    Requires a trace produced under a nondecreasing extrapolation schedule
    capped below 1/3; the envelope constant is ``1 + 2 / (1 - 3 alpha)``
    with ``alpha`` the largest recorded factor.
    """
    if trace.iterates is None or not trace.step_residuals:
        raise ValueError("trace must carry iterates and step residuals")
    alphas = np.asarray(trace.alphas, dtype=np.float64)
    if np.any(np.diff(alphas) < -1e-15):
        raise ValueError("extrapolation factors must be nondecreasing")
    alpha = float(alphas.max(initial=0.0))
    if not alpha < _GUARANTEED_CAP:
        raise ValueError(f"extrapolation cap must stay below 1/3, got {alpha}")

    constant = 1.0 + 2.0 / (1.0 - 3.0 * alpha)
    phi0 = G.quad(np.asarray(trace.iterates[0]) - np.asarray(w_star))
    res = np.asarray(trace.step_residuals, dtype=np.float64)
    running_min = np.minimum.accumulate(res)
    ks = np.arange(1, res.size + 1)
    bounds = constant * phi0 / ks
    violations = [int(k) for k, r, b in zip(ks, running_min, bounds) if r > b + tol]
    return RateReport(
        ks=ks,
        min_residuals=running_min,
        bounds=bounds,
        scaled=ks * running_min,
        violations=violations,
        constant=constant,
        phi0=phi0,
        ok=not violations,
    )


def nesterov_ippa(prox_f, w0, n_iters, lam_seq=None, objective=None):
    """Accelerated proximal point iteration for minimizing a convex f.

    Uses the scalar sequence ``t_0 = 1``,
    ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`` and extrapolation factor
    ``alpha_k = (t_k - 1) / t_{k+1}``; each step applies ``prox_f`` at the
    extrapolated point with step ``lam_seq(k)`` (default 1). The objective
    gap decays as O(1/k^2).

    Returns a :class:`SolverTrace`; ``extras["t"]`` holds t_0..t_K.
    """
    w = np.asarray(w0, dtype=np.float64).copy()
    w_prev = w.copy()
    t = 1.0
    trace = SolverTrace(
        iterates=[w.copy()],
        objective=None if objective is None else [float(objective(w))],
    )
    trace.extras["t"] = [t]
    for k in range(n_iters):
        lam_k = 1.0 if lam_seq is None else float(lam_seq(k))
        if lam_k <= 0:
            raise ValueError("lambda must be positive")
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        alpha_k = (t - 1.0) / t_next
        wbar = w + alpha_k * (w - w_prev)
        w_next = np.asarray(prox_f(wbar, lam_k), dtype=np.float64)

        trace.alphas.append(alpha_k)
        trace.lambdas.append(lam_k)
        trace.extras["t"].append(t_next)
        trace.iterates.append(w_next.copy())
        if trace.objective is not None:
            trace.objective.append(float(objective(w_next)))

        w_prev, w, t = w, w_next, t_next
        trace.iterations = k + 1
    return trace
