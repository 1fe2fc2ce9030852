"""Viscous solution of the pure quadratic problem by the Cole-Hopf formula.

    phi_t(x) = (eps d / 2) log(2 pi eps tau) - eps log Z,
    Z = int exp[-g(y)/eps - |y - x|^2 / (2 eps tau)] dy,    tau = T - t.

After ``y = x + sqrt(eps tau) z`` the integrand carries the Gaussian weight
``exp(-|z|^2/2)``. It is integrated with composite Gauss-Legendre panels on the
cube ``[-R, R]^d``; panels whose certified upper bound is negligible against the
largest sampled exponent are skipped, and the log-sum-exp uses one global
shift. Cone data at ``P_k x = 0`` also has a one-dimensional radial path that
works for any ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import erfcx, log_ndtr, logsumexp

from vvrate.problems import ProblemSpec, TerminalKind

PANEL_NODES = 8
# panels whose exponent bound sits this far below the best sample are dropped
PRUNE_GAP = 60.0
MAX_TENSOR_DIM = 3
RADIAL_HALF_WINDOW = 10.0


class QuadratureMode(str, Enum):
    TENSOR_HERMITE = "tensor_hermite"
    RADIAL_CONE = "radial_cone"


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature controls.

    ``nodes_per_axis=None`` picks enough nodes for panels of unit width in the
    rescaled variable, which resolves the Gaussian weight to machine precision.
    """

    nodes_per_axis: int | None = None
    truncation_radius_multiplier: float = 10.0
    mode: QuadratureMode = QuadratureMode.TENSOR_HERMITE

    def __post_init__(self):
        object.__setattr__(self, "mode", QuadratureMode(self.mode))
        if self.nodes_per_axis is not None and self.nodes_per_axis < 8:
            raise ValueError("nodes_per_axis must be >= 8")
        if self.truncation_radius_multiplier < 4:
            raise ValueError("truncation_radius_multiplier must be >= 4")


@dataclass(frozen=True)
class ViscousValue:
    value: float
    log_partition: float
    est_quadrature_error: float


@lru_cache(maxsize=None)
def _gauss_legendre(q: int):
    return np.polynomial.legendre.leggauss(q)


def _panels(n: int, lo: float, hi: float, anchor: float | None = None):
    """Composite rule with about ``n`` nodes on ``[lo, hi]``, arrays of shape (P, q).

    With an ``anchor`` the panel edges are shifted to pass through it, so a kink
    of the integrand there does not spoil the Gauss-Legendre convergence.
    """
    q = min(PANEL_NODES, n)
    p = -(-n // q)
    if anchor is None:
        edges = np.linspace(lo, hi, p + 1)
    else:
        h = (hi - lo) / p
        j = np.arange(math.floor((lo - anchor) / h), math.ceil((hi - anchor) / h) + 1)
        edges = anchor + h * j
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    t, w = _gauss_legendre(q)
    return mid[:, None] + half[:, None] * t, np.log(half[:, None] * w), mid, half


def _check_args(problem: ProblemSpec, eps: float, t: float):
    if not problem.is_pure_quadratic:
        raise ValueError("Cole-Hopf evaluation needs the pure quadratic Hamiltonian")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if t > problem.horizon:
        raise ValueError(f"t={t} exceeds the horizon T={problem.horizon}")
    if t < 0:
        raise ValueError("t must be nonnegative")


def _reduced(problem: ProblemSpec, x):
    """Data and point in the coordinates the integrand depends on."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (problem.dimension,):
        raise ValueError(f"x must have shape ({problem.dimension},)")
    g = problem.terminal
    if g.kind is TerminalKind.CONE_K:
        # the orthogonal coordinates contribute an exact Gaussian factor
        return g, x[: g.k], g.k
    return g, x, problem.dimension


def truncation_radius(lipschitz: float, eps: float, tau: float, multiplier: float) -> float:
    """Half-width of the integration cube in the rescaled variable.

    With ``A = L sqrt(tau/eps)`` the exponent satisfies
    ``f(z) <= f(0) + A|z| - |z|^2/2``, which at ``|z| = multiplier + 2A`` is
    below ``f(0) - multiplier |z| / 2``.
    """
    return multiplier + 2.0 * lipschitz * math.sqrt(tau / eps)


def _kink(g, xr, sigma):
    """Rescaled location of the nonsmooth point of the data, if it has one."""
    if g.kind in (TerminalKind.CONE_K, TerminalKind.NEG_SQRT):
        return -xr / sigma
    return None


def _nodes(g, xr, dim, eps, tau, n, radius):
    """Quadrature nodes ``(N, dim)`` and log-integrand incl. log-weights ``(N,)``."""
    sigma = math.sqrt(eps * tau)
    slope = g.lipschitz_const * math.sqrt(tau / eps)
    kink = _kink(g, xr, sigma)
    axes = [_panels(n, -radius, radius, None if kink is None else float(kink[j]))
            for j in range(dim)]
    mids = np.meshgrid(*[a[2] for a in axes], indexing="ij")
    shape = mids[0].shape
    centers = np.stack([m.ravel() for m in mids], axis=-1)
    rdiag = float(np.sqrt(sum(a[3].max() ** 2 for a in axes)))
    cnorm = np.linalg.norm(centers, axis=-1)
    gc = -g(xr + sigma * centers) / eps
    exact_c = gc - 0.5 * cnorm**2
    bound = gc + slope * rdiag - 0.5 * np.maximum(cnorm - rdiag, 0.0) ** 2
    active = np.stack(np.unravel_index(np.nonzero(bound >= exact_c.max() - PRUNE_GAP)[0],
                                       shape), axis=-1)
    q = axes[0][0].shape[1]
    sub = np.meshgrid(*([np.arange(q)] * dim), indexing="ij")
    sub = np.stack([a.ravel() for a in sub], axis=-1)
    z = np.stack([axes[j][0][active[:, None, j], sub[None, :, j]] for j in range(dim)],
                 axis=-1).reshape(-1, dim)
    lw = sum(axes[j][1][active[:, None, j], sub[None, :, j]] for j in range(dim)).reshape(-1)
    f = -g(xr + sigma * z) / eps - 0.5 * np.sum(z * z, axis=-1)
    return z, f + lw


def _auto_nodes(radius: float) -> int:
    return PANEL_NODES * max(8, math.ceil(2.0 * radius))


def _log_integral(problem, eps, t, x, quad, n=None):
    g, xr, dim = _reduced(problem, x)
    if dim > MAX_TENSOR_DIM:
        raise ValueError(f"tensor quadrature supports at most {MAX_TENSOR_DIM} effective "
                         f"dimensions, got {dim}")
    tau = problem.horizon - t
    radius = truncation_radius(g.lipschitz_const, eps, tau, quad.truncation_radius_multiplier)
    if n is None:
        n = quad.nodes_per_axis or _auto_nodes(radius)
    z, lf = _nodes(g, xr, dim, eps, tau, n, radius)
    return z, lf, dim, n


def _value_from(lse, problem, eps, tau, dim):
    d = problem.dimension
    log_partition = (0.5 * d * math.log(eps * tau) + float(lse)
                     + 0.5 * (d - dim) * math.log(2 * math.pi))
    value = 0.5 * eps * d * math.log(2 * math.pi * eps * tau) - eps * log_partition
    return value, log_partition


def eval_cole_hopf(problem: ProblemSpec, eps: float, t: float, x,
                   quad: QuadratureSpec | None = None) -> ViscousValue:
    """Viscous value ``phi^eps_t(x)`` with a half-resolution error estimate."""
    quad = quad or QuadratureSpec()
    _check_args(problem, eps, t)
    if quad.mode is QuadratureMode.RADIAL_CONE:
        return eval_cole_hopf_radial(problem, eps, problem.horizon - t, x=x,
                                     nodes=quad.nodes_per_axis or 200)
    tau = problem.horizon - t
    if tau == 0:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        return ViscousValue(float(problem.g(xv)), math.nan, 0.0)
    _, lf, dim, n = _log_integral(problem, eps, t, x, quad)
    value, logz = _value_from(logsumexp(lf), problem, eps, tau, dim)
    _, lf_half, _, _ = _log_integral(problem, eps, t, x, quad, n=max(1, n // 2))
    coarse, _ = _value_from(logsumexp(lf_half), problem, eps, tau, dim)
    return ViscousValue(value, logz, abs(value - coarse))


def _posterior(problem, eps, t, x, quad):
    quad = quad or QuadratureSpec()
    _check_args(problem, eps, t)
    if not t < problem.horizon:
        raise ValueError("derivatives need t < T")
    z, lf, dim, _ = _log_integral(problem, eps, t, x, quad)
    w = np.exp(lf - logsumexp(lf))
    w /= w.sum()
    mean = w @ z
    dz = z - mean
    cov = (dz * w[:, None]).T @ dz
    return mean, 0.5 * (cov + cov.T), dim


def grad_cole_hopf(problem: ProblemSpec, eps: float, t: float, x,
                   quad: QuadratureSpec | None = None) -> np.ndarray:
    """``(x - E[y]) / (T - t)`` under the posterior ``exp[-g/eps - |y-x|^2/(2 eps tau)]``."""
    mean, _, dim = _posterior(problem, eps, t, x, quad)
    tau = problem.horizon - t
    out = np.zeros(problem.dimension)
    out[:dim] = -math.sqrt(eps / tau) * mean
    return out


def hessian_cole_hopf(problem: ProblemSpec, eps: float, t: float, x,
                      quad: QuadratureSpec | None = None) -> np.ndarray:
    """``Id/tau - Cov(y)/(eps tau^2)``; the posterior covariance makes it ``<= Id/tau``."""
    _, cov, dim = _posterior(problem, eps, t, x, quad)
    tau = problem.horizon - t
    out = np.zeros((problem.dimension, problem.dimension))
    out[:dim, :dim] = (np.eye(dim) - cov) / tau
    return out


def _radial_log_integral(k: int, eps: float, tau: float, nodes: int) -> float:
    """``log int_0^inf exp(-(r - tau)^2 / (2 eps tau)) r^(k-1) dr``."""
    return (0.5 * math.log(eps * tau) + (k - 1) * math.log(tau)
            + _radial_log_j(k, math.sqrt(tau / eps), nodes))


def _radial_log_j(k: int, a: float, nodes: int) -> float:
    """``log int_{-a}^inf exp(-s^2/2) (1 + s/a)^(k-1) ds`` by quadrature."""
    # mode of -s^2/2 + (k-1) log(1 + s/a); the log-integrand is 1-strongly concave
    mode = 0.5 * (-a + math.sqrt(a * a + 4.0 * (k - 1)))
    lo = max(-a, mode - RADIAL_HALF_WINDOW)
    hi = mode + RADIAL_HALF_WINDOW
    s, logw, _, _ = _panels(nodes, lo, hi)
    s, logw = s.ravel(), logw.ravel()
    h = -0.5 * s * s
    if k > 1:
        h = h + (k - 1) * np.log1p(s / a)
    return float(logsumexp(h + logw))


def log_sphere_factor(k: int) -> float:
    """``log C_k`` with ``C_k = k pi^(k/2) / Gamma(k/2 + 1)``, the area of the unit sphere."""
    return math.log(k) + 0.5 * k * math.log(math.pi) - math.lgamma(0.5 * k + 1.0)


def eval_cole_hopf_radial(problem: ProblemSpec, eps: float, tau: float,
                          nodes: int = 200, x=None) -> ViscousValue:
    """Cone data at a point with ``P_k x = 0``, reduced to a radial integral.

    Exact rewrite: ``-g/eps - |y|^2/(2 eps tau) = tau/(2 eps) - (|y| - tau)^2/(2 eps tau)``.
    """
    g = problem.terminal
    if g.kind is not TerminalKind.CONE_K:
        raise ValueError("the radial path needs cone terminal data")
    if not problem.is_pure_quadratic:
        raise ValueError("Cole-Hopf evaluation needs the pure quadratic Hamiltonian")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not 1 <= g.k <= 64:
        raise ValueError("the radial path supports 1 <= k <= 64")
    if x is not None:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x[: g.k] != 0):
            raise ValueError("unsupported point: the radial path needs P_k(x) = 0")
    k, d = g.k, problem.dimension

    def value_at(n):
        logz = (tau / (2 * eps) + log_sphere_factor(k) + _radial_log_integral(k, eps, tau, n)
                + 0.5 * (d - k) * math.log(2 * math.pi * eps * tau))
        return 0.5 * eps * d * math.log(2 * math.pi * eps * tau) - eps * logz, logz

    value, logz = value_at(nodes)
    coarse, _ = value_at(max(8, nodes // 2))
    return ViscousValue(value, logz, abs(value - coarse))


def radial_gap(k: int, eps: float, tau: float, nodes: int = 200) -> float:
    """``phi^eps - phi^0`` for cone data at the origin, with ``phi^0 = -tau/2``.

    Computed without forming the ``tau/(2 eps)`` terms that cancel, so the gap
    keeps full relative precision for tiny ``eps``.
    """
    logj = _radial_log_integral(k, eps, tau, nodes)
    return 0.5 * eps * k * math.log(2 * math.pi * eps * tau) - eps * (log_sphere_factor(k) + logj)


def radial_remainder(k: int, eps: float, tau: float, nodes: int = 200) -> float:
    """Remainder ``(gap - expansion) / eps`` of the small-eps expansion at the origin.

    It equals ``-log(J / sqrt(2 pi))`` with ``J = int_{-a}^inf exp(-s^2/2)
    (1 + s/a)^(k-1) ds`` and ``a = sqrt(tau / eps)``. For ``k = 1, 2`` the
    remainder is exponentially small in ``a^2`` and is evaluated in closed form
    (normal CDF and Mills ratio) so it keeps full relative precision; for
    ``k >= 3`` it is of order ``1/a^2`` and the quadrature is accurate.
    """
    a = math.sqrt(tau / eps)
    if k == 1:
        return -float(log_ndtr(a))
    if k == 2:
        # J / sqrt(2 pi) - 1 = phi(a) (1/a - R(a)), with R the Mills ratio
        mills = math.sqrt(math.pi / 2) * float(erfcx(a / math.sqrt(2)))
        phi = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        return -math.log1p(phi * (1 / a - mills))
    return -(_radial_log_j(k, a, nodes) - 0.5 * math.log(2 * math.pi))
