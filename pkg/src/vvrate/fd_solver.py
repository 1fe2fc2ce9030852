"""Monotone finite differences for the viscous and inviscid equations.

The equation is marched forward in the time-to-go ``s = T - t``:

    d phi / ds = (eps/2) Lap phi - H(x, grad phi),    phi(s=0) = g,

with a local Lax-Friedrichs numerical Hamiltonian, centred second differences
and explicit Euler steps small enough to keep the scheme monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from vvrate.problems import ProblemSpec

CFL = 0.4


class ConfigurationError(ValueError):
    """Grid or run parameters that cannot produce a valid solve."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[-half_width, half_width]^d`` with ``cells_per_axis + 1`` nodes per axis.

    ``roi_radius`` is the half-width of the interior box where results are reported.
    """

    dimension: int
    half_width: float
    cells_per_axis: int
    roi_radius: float = 1.0
    boundary: str = "linear_extrapolation"

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError("finite-difference grids support d in {1, 2}")
        if self.cells_per_axis < 16:
            raise ConfigurationError("cells_per_axis must be >= 16")
        if not self.half_width > 0:
            raise ConfigurationError("half_width must be positive")
        if not 0 <= self.roi_radius <= self.half_width:
            raise ConfigurationError("roi_radius must lie in [0, half_width]")
        if self.boundary != "linear_extrapolation":
            raise ConfigurationError(f"unknown boundary {self.boundary!r}")

    @classmethod
    def with_spacing(cls, dimension: int, half_width: float, dx: float,
                     roi_radius: float = 1.0) -> GridSpec:
        cells = int(round(2 * half_width / dx))
        return cls(dimension, cells * dx / 2, cells, roi_radius)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.cells_per_axis

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.cells_per_axis + 1)

    @property
    def axes(self) -> tuple:
        return (self.axis,) * self.dimension

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n, ..., n, d)`` in row-major order."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)


def required_half_width(problem: ProblemSpec, grid: GridSpec) -> float:
    """``roi + L_speed T`` with ``L_speed = L + sup|b|`` bounding ``|grad_p H|``."""
    radius = grid.half_width * math.sqrt(grid.dimension)
    return grid.roi_radius + _speed(problem, radius) * problem.horizon


def _speed(problem: ProblemSpec, radius: float) -> float:
    drift = problem.hamiltonian.drift
    bsup = 0.0 if drift is None else drift.sup_norm(problem.dimension, radius)
    return problem.terminal.lipschitz_const + bsup


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Nodal values at one time. ``eps = 0`` marks an inviscid field.

    ``axes`` defaults to the full grid; restricted fields carry their own axes.
    """

    time: float
    grid: GridSpec
    values: np.ndarray
    eps: float
    axes: tuple = field(default=None)

    def __post_init__(self):
        if self.axes is None:
            object.__setattr__(self, "axes", self.grid.axes)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("values do not match the field axes")

    @property
    def dx(self) -> float:
        return self.grid.dx

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def interpolator(self):
        """Multilinear interpolant, linearly extrapolated outside the nodes."""
        interp = RegularGridInterpolator(self.axes, self.values, method="linear",
                                         bounds_error=False, fill_value=None)

        def evaluate(X):
            X = np.asarray(X, dtype=float)
            return interp(X.reshape(-1, X.shape[-1])).reshape(X.shape[:-1])

        return evaluate

    def lipschitz_estimate(self) -> float:
        """Largest difference quotient along the grid axes."""
        q = [np.abs(np.diff(self.values, axis=i)).max() / self.dx
             for i in range(self.values.ndim)]
        return float(max(q))

    def to_csv(self, path) -> None:
        pts = self.points().reshape(-1, len(self.axes))
        cols = np.column_stack([pts, self.values.reshape(-1)])
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# t={self.time!r} eps={self.eps!r} dx={self.dx!r}\n")
            for row in cols:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, grid: GridSpec) -> SolutionField:
        with open(path) as fh:
            header = fh.readline()
        meta = dict(tok.split("=", 1) for tok in header.lstrip("# ").split())
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        d = data.shape[1] - 1
        axes = tuple(np.unique(data[:, i]) for i in range(d))
        values = data[:, -1].reshape([len(a) for a in axes])
        return cls(float(meta["t"]), grid, values, float(meta["eps"]), axes)


def _interior(ndim):
    return (slice(1, -1),) * ndim


def _shift(a, axis, step):
    """Interior view of ``a`` shifted by ``step`` nodes along ``axis``."""
    idx = [slice(1, -1)] * a.ndim
    n = a.shape[axis]
    idx[axis] = slice(1 + step, n - 1 + step)
    return a[tuple(idx)]


def extrapolate_boundary(phi: np.ndarray) -> None:
    """Linear extrapolation of the outermost layer from the next two, in place."""
    for ax in range(phi.ndim):
        lo = [slice(None)] * phi.ndim
        a1, a2 = list(lo), list(lo)
        lo[ax], a1[ax], a2[ax] = 0, 1, 2
        phi[tuple(lo)] = 2 * phi[tuple(a1)] - phi[tuple(a2)]
        lo[ax], a1[ax], a2[ax] = -1, -2, -3
        phi[tuple(lo)] = 2 * phi[tuple(a1)] - phi[tuple(a2)]


class _Scheme:
    def __init__(self, problem: ProblemSpec, eps: float, grid: GridSpec):
        self.problem = problem
        self.eps = float(eps)
        self.grid = grid
        pts = grid.points()
        self.x_in = pts[_interior(grid.dimension)]
        self.b_in = problem.hamiltonian.b(self.x_in)
        self.sigma_floor = _speed(problem, grid.half_width * math.sqrt(grid.dimension))

    def differences(self, phi):
        dx = self.grid.dx
        c = phi[_interior(phi.ndim)]
        dp = [(_shift(phi, j, 1) - c) / dx for j in range(phi.ndim)]
        dm = [(c - _shift(phi, j, -1)) / dx for j in range(phi.ndim)]
        return c, dp, dm

    def sigma(self, phi) -> float:
        _, dp, dm = self.differences(phi)
        s = self.sigma_floor
        for j in range(phi.ndim):
            q = np.maximum(np.abs(dp[j]), np.abs(dm[j])) + np.abs(self.b_in[..., j])
            s = max(s, float(q.max()))
        return s

    def time_step(self, sigma: float) -> float:
        d, dx = self.grid.dimension, self.grid.dx
        # the hyperbolic and parabolic limits each use at most CFL of the
        # monotonicity budget, so their sum stays below one
        return CFL * min(dx / (d * max(sigma, 1e-30)), dx * dx / (d * self.eps + 1e-30))

    def rate(self, phi, sigma):
        """Right-hand side ``(eps/2) Lap phi - H_hat`` on interior nodes."""
        c, dp, dm = self.differences(phi)
        p = np.stack([(a + b) / 2 for a, b in zip(dp, dm)], axis=-1)
        hhat = self.problem.hamiltonian(self.x_in, p)
        lap = 0.0
        for j in range(phi.ndim):
            jump = dp[j] - dm[j]
            hhat = hhat - 0.5 * sigma * jump
            lap = lap + jump / self.grid.dx
        return 0.5 * self.eps * lap - hhat

    def step(self, phi, ds, sigma):
        out = phi.copy()
        out[_interior(phi.ndim)] += ds * self.rate(phi, sigma)
        extrapolate_boundary(out)
        return out


def scheme_step(problem: ProblemSpec, eps: float, grid: GridSpec, values: np.ndarray,
                ds: float | None = None, sigma: float | None = None) -> np.ndarray:
    """One explicit step of the scheme; exposed for monotonicity checks."""
    sch = _Scheme(problem, eps, grid)
    sigma = sch.sigma(values) if sigma is None else sigma
    ds = sch.time_step(sigma) if ds is None else ds
    return sch.step(np.asarray(values, dtype=float), ds, sigma)


def _validate(problem: ProblemSpec, eps: float, grid: GridSpec, times):
    if eps < 0 or not math.isfinite(eps):
        raise ConfigurationError(f"eps must be >= 0, got {eps}")
    if grid.dimension != problem.dimension:
        raise ConfigurationError("grid dimension does not match the problem dimension")
    need = required_half_width(problem, grid)
    if grid.half_width < need - 1e-12:
        raise ConfigurationError(
            f"half_width {grid.half_width} too small for the domain of dependence; "
            f"need half_width >= {need}")
    times = [float(t) for t in times]
    for t in times:
        if not 0 <= t <= problem.horizon:
            raise ConfigurationError(f"output time {t} outside [0, {problem.horizon}]")
    return times


def solve_viscous(problem: ProblemSpec, eps: float, grid: GridSpec, times,
                  sigma: float | None = None) -> list[SolutionField]:
    """Fields at the requested times ``t``, linearly interpolated between steps.

    ``sigma`` fixes the Lax-Friedrichs coefficient instead of recomputing it
    from the current difference quotients; it must still dominate ``|grad_p H|``.
    """
    times = _validate(problem, eps, grid, times)
    sch = _Scheme(problem, eps, grid)
    T = problem.horizon
    phi = problem.g(grid.points())
    prev, s_prev, s = phi, 0.0, 0.0
    found = {}
    for target in sorted({T - t for t in times}):
        while s < target - 1e-14 * T:
            sg = sch.sigma(phi) if sigma is None else sigma
            prev, s_prev = phi, s
            phi = sch.step(phi, sch.time_step(sg), sg)
            s = s_prev + sch.time_step(sg)
        if s <= target or s == s_prev:
            found[target] = phi.copy()
        else:
            w = (target - s_prev) / (s - s_prev)
            found[target] = (1 - w) * prev + w * phi
    return [SolutionField(t, grid, found[T - t], float(eps)) for t in times]


def solve_inviscid(problem: ProblemSpec, grid: GridSpec, times,
                   sigma: float | None = None) -> list[SolutionField]:
    return solve_viscous(problem, 0.0, grid, times, sigma)


def roi_restrict(fld: SolutionField) -> SolutionField:
    """Restriction to nodes with every coordinate inside the region of interest."""
    r = fld.grid.roi_radius + 1e-9 * fld.grid.dx
    keep = [np.abs(a) <= r for a in fld.axes]
    vals = fld.values[np.ix_(*keep)]
    return SolutionField(fld.time, fld.grid, vals, fld.eps,
                         tuple(a[k] for a, k in zip(fld.axes, keep)))


def field_difference(a: SolutionField, b: SolutionField) -> SolutionField:
    """Nodewise ``a - b`` on identical node sets."""
    same = (len(a.axes) == len(b.axes)
            and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a.axes, b.axes)))
    if not same or a.grid != b.grid:
        raise ValueError("fields live on different grids")
    if a.time != b.time:
        raise ValueError("fields are at different times")
    return SolutionField(a.time, a.grid, a.values - b.values, a.eps, a.axes)


def discrete_gap(problem: ProblemSpec, eps: float, grid: GridSpec, t: float,
                 inviscid_grid: GridSpec | None = None) -> SolutionField:
    """``phi^eps_t - phi^0_t`` restricted to the region of interest."""
    if inviscid_grid is not None and inviscid_grid != grid:
        raise ValueError("viscous and inviscid solves need the same grid")
    visc = solve_viscous(problem, eps, grid, [t])[0]
    invi = solve_inviscid(problem, grid, [t])[0]
    return roi_restrict(field_difference(visc, invi))
