"""Fokker-Planck flow along an interpolated drift, with entropy bookkeeping.

    d mu / ds = div[mu b_s + (eps/2) grad mu],    mu_t = Dirac at x,

i.e. mass moves with velocity ``-b`` and diffuses with coefficient ``eps/2``.
Differentiating the entropy along the flow gives

    d/ds int mu log mu = int div(b) dmu - (eps/2) int |grad log mu|^2 dmu,

and the trace records every term so the identity can be checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from vvrate.fd_solver import (ConfigurationError, GridSpec, solve_inviscid,
                              solve_viscous)
from vvrate.problems import ProblemSpec
from vvrate.regularize import sup_convolve_many

CFL = 0.4
BURN_CELLS = 4.0
TINY = 1e-300
CSV_COLUMNS = ("s", "entropy", "fisher", "mass", "div_drift_cum", "laplacian_cum")


@dataclass(frozen=True, eq=False)
class DriftField:
    """Time-dependent vector field ``b(s, X)`` with ``|b| <= bound``.

    ``evaluate`` maps a time and points ``(..., d)`` to vectors ``(..., d)``.
    ``laplacian`` optionally maps ``(s, X)`` to the Laplacian of the regularised
    inviscid solution that produced the drift.
    """

    evaluate: object
    bound: float
    time_dependent: bool = True
    laplacian: object = None

    def __call__(self, s, X):
        return self.evaluate(s, X)

    @classmethod
    def zero(cls) -> DriftField:
        return cls(lambda s, X: np.zeros(np.shape(X)), 0.0, False)

    @classmethod
    def constant(cls, v) -> DriftField:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return cls(lambda s, X: np.broadcast_to(v, np.shape(X)).copy(),
                   float(np.linalg.norm(v)), False)


def _gradient(values, dx):
    g = np.gradient(values, dx, edge_order=2)
    return np.stack(g if isinstance(g, (list, tuple)) else [g], axis=-1)


def _laplacian(values, dx):
    lap = np.zeros_like(values)
    for ax in range(values.ndim):
        dd = np.zeros_like(values)
        sl = [slice(None)] * values.ndim
        sl_c, sl_p, sl_m = list(sl), list(sl), list(sl)
        sl_c[ax], sl_p[ax], sl_m[ax] = slice(1, -1), slice(2, None), slice(None, -2)
        dd[tuple(sl_c)] = (values[tuple(sl_p)] - 2 * values[tuple(sl_c)]
                           + values[tuple(sl_m)]) / dx**2
        for edge, src in ((0, 1), (-1, -2)):
            a, b = list(sl), list(sl)
            a[ax], b[ax] = edge, src
            dd[tuple(a)] = dd[tuple(b)]
        lap += dd
    return lap


def _time_interpolant(times, fields, axes):
    """``(s, X) -> value`` linear in time between snapshots, multilinear in space."""
    times = np.asarray(times, dtype=float)
    interps = [RegularGridInterpolator(axes, f, method="linear", bounds_error=False,
                                       fill_value=None) for f in fields]

    def evaluate(s, X):
        X = np.asarray(X, dtype=float)
        pts = X.reshape(-1, X.shape[-1])
        j = int(np.clip(np.searchsorted(times, s) - 1, 0, len(times) - 2))
        w = float(np.clip((s - times[j]) / (times[j + 1] - times[j]), 0.0, 1.0))
        out = (1 - w) * interps[j](pts) + w * interps[j + 1](pts)
        return out.reshape(X.shape[:-1] + out.shape[1:])

    return evaluate


def pipeline_drift(problem: ProblemSpec, eps: float, delta: float, grid: GridSpec,
                   t: float = 0.0, snapshots: int = 41, tol: float = 1e-9) -> DriftField:
    """Averaged drift ``-b + (grad phi^eps + grad phi^{0,delta}) / 2`` from grid solves.

    For the quadratic family this is the exact average of ``grad_p H`` along the
    segment between the two gradients. ``phi^{0,delta}`` is the sup-convolution
    of the inviscid field, and its Laplacian is attached for later integration.
    """
    times = np.linspace(t, problem.horizon, snapshots)
    visc = solve_viscous(problem, eps, grid, times)
    invi = solve_inviscid(problem, grid, times)
    pts = grid.points()
    lip = problem.terminal.lipschitz_const
    drift = problem.hamiltonian.drift
    if drift is not None:
        lip *= math.exp(drift.jacobian_bound * problem.horizon)
    minus_b = -problem.hamiltonian.b(pts)
    drifts, laps = [], []
    for fe, f0 in zip(visc, invi):
        lf = max(lip, f0.lipschitz_estimate())
        reg = sup_convolve_many(f0.interpolator(), delta, pts, lf, tol)
        drifts.append(minus_b + 0.5 * (_gradient(fe.values, grid.dx) + _gradient(reg, grid.dx)))
        laps.append(_laplacian(reg, grid.dx))
    bsup = 0.0 if drift is None else drift.sup_norm(problem.dimension,
                                                    grid.half_width * math.sqrt(grid.dimension))
    bound = max(lip + bsup, max(float(np.linalg.norm(b, axis=-1).max()) for b in drifts))
    return DriftField(_time_interpolant(times, drifts, grid.axes), bound, True,
                      _time_interpolant(times, laps, grid.axes))


@dataclass(frozen=True, eq=False)
class EntropyTrace:
    """Recorded quantities at ``times`` for a flow started from ``x`` at ``t0``.

    Running integrals start at the burn-in time ``t0 + t_burn``. ``min_density``
    is the smallest nodal density seen up to each recorded time.
    """

    times: np.ndarray
    entropy: np.ndarray
    fisher: np.ndarray
    mass: np.ndarray
    div_drift_integral: np.ndarray
    laplacian_integral: np.ndarray
    fisher_integral: np.ndarray
    t0: float
    eps: float
    dimension: int
    min_density: np.ndarray = None

    def index(self, s: float) -> int:
        hit = np.nonzero(np.isclose(self.times, s, rtol=0.0, atol=1e-12))[0]
        if hit.size == 0:
            raise ValueError(f"time {s} was not recorded")
        return int(hit[0])

    def to_csv(self, path) -> None:
        cols = np.column_stack([self.times, self.entropy, self.fisher, self.mass,
                                self.div_drift_integral, self.laplacian_integral])
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in cols:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, t0: float, eps: float, dimension: int) -> EntropyTrace:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        s, fisher = data[:, 0], data[:, 2]
        # the Fisher integral is rebuilt between recorded times
        fi = np.concatenate([[0.0], np.cumsum(0.5 * (fisher[1:] + fisher[:-1]) * np.diff(s))])
        return cls(s, data[:, 1], fisher, data[:, 3], data[:, 4], data[:, 5], fi,
                   t0, eps, dimension)


class _FiniteVolume:
    def __init__(self, drift: DriftField, eps: float, grid: GridSpec):
        self.drift = drift
        self.eps = eps
        self.grid = grid
        d, dx = grid.dimension, grid.dx
        ax = grid.axis
        self.nodes = grid.points()
        faces = 0.5 * (ax[1:] + ax[:-1])
        # face points per axis: faces along that axis, nodes along the others
        self.face_pts = []
        for j in range(d):
            axes = [ax] * d
            axes[j] = faces
            self.face_pts.append(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1))
        self.cell = dx**d
        self._cache = None

    def face_velocity(self, s):
        """Velocity ``-b`` normal to each face family."""
        if self._cache is not None and not self.drift.time_dependent:
            return self._cache
        vel = [-self.drift(s, fp)[..., j] for j, fp in enumerate(self.face_pts)]
        self._cache = vel
        return vel

    def div_b(self, s):
        """Divergence of ``b`` at nodes from face values; zero on the boundary layer."""
        dx = self.grid.dx
        out = np.zeros(self.nodes.shape[:-1])
        vel = self.face_velocity(s)
        for j, v in enumerate(vel):
            sl_c = [slice(None)] * out.ndim
            sl_c[j] = slice(1, -1)
            a, b = [slice(None)] * out.ndim, [slice(None)] * out.ndim
            a[j], b[j] = slice(1, None), slice(None, -1)
            out[tuple(sl_c)] += -(v[tuple(a)] - v[tuple(b)]) / dx
        return out

    def time_step(self, umax):
        d, dx = self.grid.dimension, self.grid.dx
        return CFL / (2 * d * umax / dx + d * self.eps / dx**2)

    def step(self, mu, s, dt):
        """Strong-stability-preserving Heun step: a convex combination of Euler steps."""
        mid = self.euler(mu, s, dt)
        return 0.5 * mu + 0.5 * self.euler(mid, s + dt, dt)

    def euler(self, mu, s, dt):
        dx = self.grid.dx
        new = mu.copy()
        for j, v in enumerate(self.face_velocity(s)):
            lo, hi = [slice(None)] * mu.ndim, [slice(None)] * mu.ndim
            lo[j], hi[j] = slice(None, -1), slice(1, None)
            ml, mr = mu[tuple(lo)], mu[tuple(hi)]
            upwind = np.maximum(v, 0) * ml + np.minimum(v, 0) * mr
            # centred advection is still positivity-preserving when the cell
            # Peclet number |v| dx / eps is at most one, and adds no numerical diffusion
            adv = np.where(np.abs(v) * dx <= self.eps, 0.5 * v * (ml + mr), upwind)
            flux = adv - 0.5 * self.eps * (mr - ml) / dx
            # zero flux through the outer faces
            new[tuple(lo)] -= dt / dx * flux
            new[tuple(hi)] += dt / dx * flux
        return new


def _interior(ndim):
    return (slice(1, -1),) * ndim


def entropy_of(mu, cell):
    m = mu[_interior(mu.ndim)]
    pos = m > TINY
    return float(np.sum(m[pos] * np.log(m[pos])) * cell)


def fisher_of(mu, dx):
    cell = dx**mu.ndim
    grads = np.gradient(mu, dx)
    grads = grads if isinstance(grads, (list, tuple)) else [grads]
    sq = sum(g * g for g in grads)
    m, q = mu[_interior(mu.ndim)], sq[_interior(mu.ndim)]
    pos = m > TINY
    return float(np.sum(q[pos] / m[pos]) * cell)


def _weighted(mu, field, cell):
    return float(np.sum((mu * field)[_interior(mu.ndim)]) * cell)


def solve_fokker_planck(drift: DriftField, eps: float, t: float, x, grid: GridSpec,
                        record_times) -> EntropyTrace:
    """Finite-volume flow from a mollified Dirac at ``x``.

    The start is the Gaussian of covariance ``eps t_burn Id`` at time
    ``t + t_burn`` with ``t_burn = 4 dx^2 / eps``, the exact zero-drift solution
    at that time. Diffusive fluxes are centred; advective fluxes are centred where
    the cell Peclet number is at most one and upwind elsewhere, so mass is
    conserved to rounding and the density stays nonnegative.
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d, dx = grid.dimension, grid.dx
    if x.shape != (d,):
        raise ConfigurationError("starting point dimension does not match the grid")
    record = sorted(float(r) for r in record_times)
    if not record:
        raise ConfigurationError("no record times")
    t_burn = BURN_CELLS * dx * dx / eps
    if math.sqrt(eps * t_burn) < 2 * dx * (1 - 1e-12):
        raise ConfigurationError("initial Gaussian narrower than 2 dx; refine the grid")
    if record[0] < t + t_burn:
        raise ConfigurationError(
            f"first record time {record[0]} precedes the burn-in end {t + t_burn}; "
            "refine the grid")
    fv = _FiniteVolume(drift, eps, grid)
    r2 = np.sum((fv.nodes - x) ** 2, axis=-1)
    mu = np.exp(-r2 / (2 * eps * t_burn))
    mu /= mu.sum() * fv.cell
    lap_fn = drift.laplacian

    def integrands(m, s):
        div = _weighted(m, fv.div_b(s), fv.cell)
        lap = 0.0 if lap_fn is None else _weighted(m, lap_fn(s, fv.nodes), fv.cell)
        return np.array([div, lap, fisher_of(m, dx)])

    s = t + t_burn
    acc = np.zeros(3)
    cur = integrands(mu, s)
    rows = []
    low = float(mu.min())
    for target in record:
        while s < target - 1e-13:
            umax = max(drift.bound, 1e-12)
            dt = min(fv.time_step(umax), target - s)
            mu = fv.step(mu, s, dt)
            low = min(low, float(mu.min()))
            s = target if target - s - dt < 1e-13 else s + dt
            nxt = integrands(mu, s)
            acc += 0.5 * dt * (cur + nxt)
            cur = nxt
        rows.append((s, entropy_of(mu, fv.cell), cur[2], float(mu.sum() * fv.cell),
                     acc[0], acc[1], acc[2], low))
    a = np.array(rows)
    return EntropyTrace(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5], a[:, 6],
                        float(t), float(eps), d, a[:, 7])


def identity_terms(trace: EntropyTrace, s1: float, s2: float):
    """Entropy change, integrated divergence and integrated Fisher between two times."""
    i, j = trace.index(s1), trace.index(s2)
    return (trace.entropy[j] - trace.entropy[i],
            trace.div_drift_integral[j] - trace.div_drift_integral[i],
            trace.fisher_integral[j] - trace.fisher_integral[i])


def entropy_identity_residual(trace: EntropyTrace, s1: float, s2: float) -> float:
    """``|dEnt - (int div b - (eps/2) int Fisher)|`` between ``s1 <= s2``."""
    if s1 > s2:
        raise ValueError("need s1 <= s2")
    dent, div, fis = identity_terms(trace, s1, s2)
    return abs(dent - (div - 0.5 * trace.eps * fis))


def entropy_excess_without_fisher(trace: EntropyTrace, s1: float, s2: float) -> float:
    """``int div b - dEnt``; nonnegative up to discretisation since the Fisher term is."""
    dent, div, _ = identity_terms(trace, s1, s2)
    return div - dent


def check_entropy_bound(trace: EntropyTrace, tau: float, L: float):
    """``(lhs, rhs, holds)`` for ``Ent(t+tau) <= -(d/2) log(2 pi eps tau) + tau L^2 / (2 eps)``."""
    lhs = float(trace.entropy[trace.index(trace.t0 + tau)])
    eps, d = trace.eps, trace.dimension
    rhs = -0.5 * d * math.log(2 * math.pi * eps * tau) + tau * L * L / (2 * eps)
    return lhs, rhs, bool(lhs <= rhs + 0.05)


def integrated_laplacian(trace: EntropyTrace, tau: float, horizon: float | None = None) -> float:
    """``(1/2) int_{t+tau}^{T} int Lap phi^{0,delta} dmu ds`` from the recorded running integral.

    The Laplacian is integrated during the solve (see :func:`pipeline_drift`);
    ``T`` defaults to the last recorded time.
    """
    end = trace.times[-1] if horizon is None else horizon
    i, j = trace.index(trace.t0 + tau), trace.index(end)
    return 0.5 * float(trace.laplacian_integral[j] - trace.laplacian_integral[i])


def laplacian_lower_bound(eps: float, tau: float, L: float, dimension: int,
                          theta: float = 1.0) -> float:
    """``(d / 2 theta) log(2 pi eps tau) - tau L^2 / (2 eps theta)``, before the constant."""
    return (dimension / (2 * theta)) * math.log(2 * math.pi * eps * tau) \
        - tau * L * L / (2 * eps * theta)
