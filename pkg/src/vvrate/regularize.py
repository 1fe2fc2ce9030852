"""Sup-convolution regularisation and semiconvexity certificates.

    f^delta(x) = sup_y f(y) - |x - y|^2 / (2 delta)

For an L-Lipschitz ``f`` the supremum is attained in ``|y - x| <= 2 L delta``
(outside it the penalty exceeds the Lipschitz gain), and the result is
L-Lipschitz, ``-1/delta``-semiconvex and lies in ``[f, f + L^2 delta / 2]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vvrate import _search
from vvrate.fd_solver import SolutionField

COARSE_DIVISIONS = 16


def _as_evaluator(base):
    if isinstance(base, SolutionField):
        return base.interpolator()
    return base


@dataclass(frozen=True, eq=False)
class SupConvolution:
    """Callable ``x -> f^delta(x)`` for a base field with Lipschitz bound ``lipschitz``.

    ``base`` maps arrays of points ``(..., d)`` to values ``(...)``; a
    :class:`SolutionField` is extended by multilinear interpolation, which
    keeps its Lipschitz bound.
    """

    base: object
    delta: float
    lipschitz: float
    tol: float = 1e-9

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.lipschitz < 0:
            raise ValueError("lipschitz must be nonnegative")
        object.__setattr__(self, "base", _as_evaluator(self.base))

    @property
    def search_radius(self) -> float:
        return 2.0 * self.lipschitz * self.delta

    def __call__(self, X):
        return sup_convolve_many(self.base, self.delta, X, self.lipschitz, self.tol)


def sup_convolve_many(base, delta: float, X, lipschitz: float, tol: float = 1e-9):
    """Vectorised sup-convolution at the points ``X`` of shape ``(..., d)``."""
    base = _as_evaluator(base)
    X = np.asarray(X, dtype=float)
    shape = X.shape[:-1]
    pts = X.reshape(-1, X.shape[-1])
    if lipschitz == 0:
        return base(pts).reshape(shape)

    def objective(Y, rows):
        return -(base(Y) - np.sum((Y - pts[rows, None, :]) ** 2, axis=-1) / (2 * delta))

    radius = 2.0 * lipschitz * delta
    _, v = _search.minimize_in_ball(objective, pts, radius, radius / (2 * COARSE_DIVISIONS),
                                    tol * delta)
    # y = x is always admissible, so never report less than the base value
    return np.maximum(-v, base(pts)).reshape(shape)


def sup_convolve(base, delta: float, x, lipschitz: float = 1.0, tol: float = 1e-9) -> float:
    """``sup_{|y-x| <= 2 L delta} base(y) - |x - y|^2 / (2 delta)`` at a single point."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(sup_convolve_many(base, delta, x[None], lipschitz, tol)[0])


def second_differences(field, x, h):
    """``field(x + h) + field(x - h) - 2 field(x)`` for paired arrays of points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    return field(x + h) + field(x - h) - 2.0 * field(x)


def semiconvexity_deficit(field, delta: float, samples) -> float:
    """``min [second difference + |h|^2 / delta]`` over ``samples`` of ``(x, h)`` pairs.

    A nonnegative result certifies ``-1/delta``-semiconvexity on the samples.
    """
    field = _as_evaluator(field)
    x = np.array([np.atleast_1d(s[0]) for s in samples], dtype=float)
    h = np.array([np.atleast_1d(s[1]) for s in samples], dtype=float)
    vals = second_differences(field, x, h) + np.sum(h * h, axis=-1) / delta
    return float(vals.min())
