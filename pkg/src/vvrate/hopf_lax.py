"""Inviscid solution of the pure quadratic problem by the Hopf-Lax formula.

    phi0_t(x) = inf_y  g(y) + |y - x|^2 / (2 (T - t))

The infimum is searched exhaustively on a grid over ``|y - x| <= 2 L (T - t)``
(outside that ball the penalty beats the Lipschitz decrease of ``g``) and then
refined by compass search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vvrate import _search
from vvrate.problems import ProblemSpec, TerminalKind

COARSE_DIVISIONS = 32


@dataclass(frozen=True)
class HopfLaxResult:
    value: float
    minimizers: np.ndarray
    tolerance_used: float


def _check_time(problem: ProblemSpec, t: float) -> float:
    if t > problem.horizon:
        raise ValueError(f"t={t} exceeds the horizon T={problem.horizon}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return problem.horizon - t


def _require_pure(problem: ProblemSpec):
    if not problem.is_pure_quadratic:
        raise ValueError("Hopf-Lax evaluation needs the pure quadratic Hamiltonian")


def inf_convolution(fun, x, tau: float, lipschitz: float, tol: float = 1e-8) -> HopfLaxResult:
    """``inf_y fun(y) + |y - x|^2 / (2 tau)`` for an L-Lipschitz ``fun``.

    ``fun`` maps an array of points ``(..., d)`` to values ``(...)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if tau <= 0 or lipschitz <= 0:
        return HopfLaxResult(float(fun(x[None])[0]), x[None].copy(), tol)
    spacing = tau * lipschitz / COARSE_DIVISIONS
    d = x.shape[0]
    margin = lipschitz * spacing * np.sqrt(d) + d * spacing**2 / tau

    def objective(Y, rows):
        return fun(Y) + np.sum((Y - x) ** 2, axis=-1) / (2 * tau)

    value, mins = _search.minimizer_set(objective, x, 2 * lipschitz * tau, spacing,
                                        tol * tau, tol, margin)
    return HopfLaxResult(value, mins, tol)


def _cone_profile(rho, tau, tol):
    """Minimise ``-|r| + (r - rho)^2 / (2 tau)`` over ``r``, batched over ``rho``."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    spacing = tau / COARSE_DIVISIONS

    def objective(R, rows):
        r = R[..., 0]
        return -np.abs(r) + (r - rho[rows, None]) ** 2 / (2 * tau)

    r, v = _search.minimize_in_ball(objective, rho[:, None], 2 * tau, spacing, tol * tau)
    return r[:, 0], v


def eval_hopf_lax(problem: ProblemSpec, t: float, x, tol: float = 1e-8) -> HopfLaxResult:
    """Evaluate ``phi0_t(x)`` with a finite set of representative minimisers.

    Cone data ``-|P_k y|`` is reduced exactly to a one-dimensional search along
    the ray through ``P_k x`` (any ray when ``P_k x = 0``), so every ``k`` is
    supported.
    """
    _require_pure(problem)
    tau = _check_time(problem, t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (problem.dimension,):
        raise ValueError(f"x must have shape ({problem.dimension},)")
    g = problem.terminal
    if tau == 0 or g.lipschitz_const == 0:
        return HopfLaxResult(float(g(x)), x[None].copy(), tol)
    if g.kind is TerminalKind.CONE_K:
        k = g.k
        rho = float(np.linalg.norm(x[:k]))
        u = np.zeros(k)
        if rho > 0:
            u = x[:k] / rho
        else:
            u[0] = 1.0

        def profile(R):
            r = R[..., 0]
            return -np.abs(r)

        res = inf_convolution(profile, np.array([rho]), tau, 1.0, tol)
        mins = np.repeat(x[None], res.minimizers.shape[0], axis=0)
        mins[:, :k] = res.minimizers[:, :1] * u
        return HopfLaxResult(res.value, mins, tol)
    return inf_convolution(g, x, tau, g.lipschitz_const, tol)


def hopf_lax_field(problem: ProblemSpec, t: float, tol: float = 1e-8):
    """Vectorised ``X -> phi0_t(X)`` for arrays of points ``(..., d)``."""
    _require_pure(problem)
    tau = _check_time(problem, t)
    g = problem.terminal
    lip = g.lipschitz_const

    def field(X):
        X = np.asarray(X, dtype=float)
        shape = X.shape[:-1]
        pts = X.reshape(-1, problem.dimension)
        if tau == 0 or lip == 0:
            return g(pts).reshape(shape)
        if g.kind is TerminalKind.CONE_K:
            rho = np.linalg.norm(pts[:, : g.k], axis=-1)
            return _cone_profile(rho, tau, tol)[1].reshape(shape)

        def objective(Y, rows):
            return g(Y) + np.sum((Y - pts[rows, None, :]) ** 2, axis=-1) / (2 * tau)

        _, v = _search.minimize_in_ball(objective, pts, 2 * lip * tau,
                                        tau * lip / COARSE_DIVISIONS, tol * tau)
        return v.reshape(shape)

    return field


def semigroup_residual(problem: ProblemSpec, t: float, s: float, x, tol: float = 1e-8) -> float:
    """Dynamic-programming defect ``|HL(t->T) - HL(t->s) o HL(s->T)|`` at ``x``."""
    if not t < s < problem.horizon:
        raise ValueError("need t < s < T")
    direct = eval_hopf_lax(problem, t, x, tol).value
    inner = hopf_lax_field(problem, s, tol)
    outer = inf_convolution(inner, x, s - t, problem.terminal.lipschitz_const, tol)
    return abs(direct - outer.value)
