"""Closed-form proximal maps and the shrinkage operators built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numkit import svd


def soft_threshold(v, kappa):
    """Componentwise shrinkage ``sign(v) * max(|v| - kappa, 0)``.

    Exact proximal map of ``kappa * ||.||_1`` at ``v``; entries with
    ``|v| == kappa`` map to 0. Works on arrays of any shape.
    """
    if kappa < 0:
        raise ValueError(f"threshold must be nonnegative, got {kappa}")
    a = np.asarray(v, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)


def svt_with_values(mat, kappa):
    """Singular value thresholding, also returning the shrunk spectrum."""
    u, s, v = svd(mat)
    shrunk = np.maximum(s - kappa, 0.0)
    return (u * shrunk) @ v.T, shrunk


def svt(mat, kappa):
    """Singular value thresholding: prox of ``kappa * ||.||_*``.

    Applies :func:`soft_threshold` to the singular values and recomposes.
    """
    if kappa < 0:
        raise ValueError(f"threshold must be nonnegative, got {kappa}")
    out, _ = svt_with_values(mat, kappa)
    return out


def project_box(v, lo, hi):
    """Euclidean projection onto the box ``[lo, hi]`` (componentwise)."""
    a = np.asarray(v, dtype=np.float64)
    lo_a = np.broadcast_to(np.asarray(lo, dtype=np.float64), a.shape)
    hi_a = np.broadcast_to(np.asarray(hi, dtype=np.float64), a.shape)
    if np.any(lo_a > hi_a):
        raise ValueError("infeasible box: lo > hi on some coordinate")
    return np.minimum(np.maximum(a, lo_a), hi_a)


@dataclass
class ProxOracle:
    """A convex function given through its proximal map.

    ``eval(z, kappa)`` returns ``argmin_w phi(w) + ||w - z||^2 / (2 kappa)``
    and ``objective(w)`` returns ``phi(w)``. Set constraints folded into
    the oracle are handled inside ``eval``; ``objective`` reports only the
    finite part.
    """

    eval: Callable[[np.ndarray, float], np.ndarray]
    objective: Callable[[np.ndarray], float]


def l1_oracle(weight=1.0):
    """``phi(w) = weight * ||w||_1`` with soft-threshold prox."""
    if weight < 0:
        raise ValueError("weight must be nonnegative")

    def _eval(z, kappa):
        return soft_threshold(z, weight * kappa)

    def _obj(w):
        return weight * float(np.abs(w).sum())

    return ProxOracle(_eval, _obj)


def nuclear_oracle(weight=1.0):
    """``phi(W) = weight * ||W||_*`` with singular value thresholding."""
    if weight < 0:
        raise ValueError("weight must be nonnegative")

    def _eval(z, kappa):
        return svt(z, weight * kappa)

    def _obj(w):
        _, s, _ = svd(w)
        return weight * float(s.sum())

    return ProxOracle(_eval, _obj)


def zero_oracle():
    """``phi = 0``; the prox is the identity."""
    return ProxOracle(lambda z, kappa: np.asarray(z, dtype=np.float64).copy(),
                      lambda w: 0.0)


def quadratic_oracle(P, c):
    """``phi(w) = w' P w / 2 + c' w`` for symmetric positive semidefinite P.

    The prox solves the linear system ``(P + I/kappa) w = z/kappa - c``.
    """
    P = np.asarray(P, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64).ravel()
    n = c.size
    if P.shape != (n, n):
        raise ValueError(f"P must be {n}x{n}, got {P.shape}")

    def _eval(z, kappa):
        zz = np.asarray(z, dtype=np.float64).ravel()
        return np.linalg.solve(P + np.eye(n) / kappa, zz / kappa - c)

    def _obj(w):
        ww = np.asarray(w, dtype=np.float64).ravel()
        return float(0.5 * ww @ P @ ww + c @ ww)

    return ProxOracle(_eval, _obj)


def diag_quadratic_oracle(d, c, lo=None, hi=None):
    """Separable quadratic ``sum_i d_i w_i^2 / 2 + c_i w_i``, optional box.

    With a box the prox stays closed form: the unconstrained coordinate
    minimizer is clamped, which is exact because the function separates.
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    if d.shape != c.shape:
        raise ValueError("d and c must have matching shapes")
    if np.any(d < 0):
        raise ValueError("diagonal curvature must be nonnegative")

    def _eval(z, kappa):
        zz = np.asarray(z, dtype=np.float64).ravel()
        w = (zz / kappa - c) / (d + 1.0 / kappa)
        if lo is not None or hi is not None:
            w = project_box(
                w,
                -np.inf if lo is None else lo,
                np.inf if hi is None else hi,
            )
        return w

    def _obj(w):
        ww = np.asarray(w, dtype=np.float64).ravel()
        return float(0.5 * (d * ww * ww).sum() + c @ ww)

    return ProxOracle(_eval, _obj)


def box_oracle(lo, hi):
    """Indicator of a box: the prox is projection, the objective is 0."""
    return ProxOracle(lambda z, kappa: project_box(z, lo, hi), lambda w: 0.0)


def prox_objective_gap(oracle: ProxOracle, z, kappa, probe):
    """Slack of the prox optimality inequality at a probe point.

    Nonnegative for a correct oracle:
    ``phi(probe) + ||probe - z||^2/(2 kappa)`` minus the same expression
    at ``eval(z, kappa)``.
    """
    w = oracle.eval(z, kappa)
    z = np.asarray(z, dtype=np.float64)
    probe = np.asarray(probe, dtype=np.float64)

    def val(u):
        return oracle.objective(u) + float(np.sum((u - z) ** 2)) / (2.0 * kappa)

    return val(probe) - val(w)
