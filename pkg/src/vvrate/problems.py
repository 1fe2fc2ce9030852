"""Hamiltonians, terminal data and their regularity constants.

Every solver in the package consumes a :class:`ProblemSpec`: a quadratic-family
Hamiltonian ``H(x, p) = -b(x).p + |p|^2 / 2`` (``b = 0`` for the pure case), a
Lipschitz terminal condition ``g`` and a horizon ``T``. Points are arrays whose
last axis has length ``dimension``; all evaluators broadcast over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class HamiltonianKind(str, Enum):
    PURE_QUADRATIC = "pure_quadratic"
    QUADRATIC_WITH_DRIFT = "quadratic_with_drift"


class TerminalKind(str, Enum):
    CONE_K = "cone"
    AFFINE = "affine"
    NEG_SQRT = "neg_sqrt"
    GRID_SAMPLED = "grid_sampled"


def _as_points(x, dimension=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if dimension is not None and x.shape[-1] != dimension:
        raise ValueError(f"expected points of dimension {dimension}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class Drift:
    """Vector field ``b`` from a fixed catalog.

    ``kind`` is ``"zero"``, ``"affine"`` (``b(x) = M x + c``) or ``"sinusoidal"``
    (``b_i(x) = amplitude * sin(frequency * x_i)``).
    """

    kind: str = "zero"
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    amplitude: float = 0.0
    frequency: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "affine", "sinusoidal"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind == "affine":
            if self.matrix is None:
                raise ValueError("affine drift needs a matrix")
            m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            if m.shape[0] != m.shape[1]:
                raise ValueError("affine drift matrix must be square")
            c = np.zeros(m.shape[0]) if self.offset is None else np.asarray(self.offset, float)
            object.__setattr__(self, "matrix", m)
            object.__setattr__(self, "offset", c.reshape(m.shape[0]))

    @classmethod
    def zero(cls) -> Drift:
        return cls("zero")

    @classmethod
    def affine(cls, matrix, offset=None) -> Drift:
        return cls("affine", matrix=matrix, offset=offset)

    @classmethod
    def sinusoidal(cls, amplitude: float, frequency: float = 1.0) -> Drift:
        return cls("sinusoidal", amplitude=float(amplitude), frequency=float(frequency))

    @property
    def dimension(self) -> int | None:
        return None if self.matrix is None else self.matrix.shape[0]

    def __call__(self, x):
        x = _as_points(x, self.dimension)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "affine":
            return x @ self.matrix.T + self.offset
        return self.amplitude * np.sin(self.frequency * x)

    @property
    def jacobian_bound(self) -> float:
        """Bound on the operator norm of ``Db``."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "affine":
            return float(np.linalg.norm(self.matrix, 2))
        return abs(self.amplitude * self.frequency)

    @property
    def hessian_bound(self) -> float:
        if self.kind == "sinusoidal":
            return abs(self.amplitude) * self.frequency**2
        return 0.0

    def sup_norm(self, dimension: int, radius: float = math.inf) -> float:
        """Bound on ``|b(x)|`` over the ball ``|x| <= radius``."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "sinusoidal":
            return abs(self.amplitude) * math.sqrt(dimension)
        return float(np.linalg.norm(self.offset)) + self.jacobian_bound * radius


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    kind: HamiltonianKind = HamiltonianKind.PURE_QUADRATIC
    drift: Drift | None = None

    def __post_init__(self):
        kind = HamiltonianKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is HamiltonianKind.PURE_QUADRATIC:
            if self.drift is not None and self.drift.kind != "zero":
                raise ValueError("PURE_QUADRATIC Hamiltonian takes no drift")
            object.__setattr__(self, "drift", None)
        elif self.drift is None:
            object.__setattr__(self, "drift", Drift.zero())

    def b(self, x):
        x = np.asarray(x, dtype=float)
        if self.drift is None:
            return np.zeros_like(x)
        return self.drift(x)

    def __call__(self, x, p):
        x, p = np.broadcast_arrays(np.asarray(x, float), np.asarray(p, float))
        return -np.sum(self.b(x) * p, axis=-1) + 0.5 * np.sum(p * p, axis=-1)

    def grad_p(self, x, p):
        x, p = np.broadcast_arrays(np.asarray(x, float), np.asarray(p, float))
        return p - self.b(x)

    def lagrangian(self, x, a):
        x, a = np.broadcast_arrays(np.asarray(x, float), np.asarray(a, float))
        r = self.b(x) - a
        return 0.5 * np.sum(r * r, axis=-1)


def _check_pair(x, p, dimension=None):
    x = _as_points(x, dimension)
    p = _as_points(p, dimension)
    if x.shape[-1] != p.shape[-1]:
        raise ValueError(f"dimension mismatch: x has {x.shape[-1]}, p has {p.shape[-1]}")
    return x, p


def eval_hamiltonian(spec: HamiltonianSpec, x, p, dimension: int | None = None):
    """``H(x, p)``; scalar for single points, array for batches."""
    x, p = _check_pair(x, p, dimension)
    if spec.drift is not None and spec.drift.dimension not in (None, x.shape[-1]):
        raise ValueError("drift dimension does not match the point dimension")
    out = spec(x, p)
    return float(out) if np.ndim(out) == 0 else out


def eval_lagrangian(spec: HamiltonianSpec, x, a, dimension: int | None = None):
    """Legendre dual ``L(x, a) = |b(x) - a|^2 / 2``."""
    x, a = _check_pair(x, a, dimension)
    out = spec.lagrangian(x, a)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class TerminalData:
    """Terminal condition ``g`` with its Lipschitz and semiconcavity constants.

    Use the constructors :meth:`cone`, :meth:`affine`, :meth:`neg_sqrt` and
    :meth:`grid_sampled`. ``semiconcavity_const`` is ``None`` when ``g`` is not
    known to be semiconcave.
    """

    kind: TerminalKind
    lipschitz_const: float
    semiconcavity_const: float | None
    k: int | None = None
    slope: np.ndarray | None = None
    offset: float = 0.0
    axes: tuple | None = None
    values: np.ndarray | None = None
    _interp: object = field(default=None, repr=False)

    @classmethod
    def cone(cls, k: int) -> TerminalData:
        if int(k) < 1:
            raise ValueError("cone data needs k >= 1")
        return cls(TerminalKind.CONE_K, 1.0, 0.0, k=int(k))

    @classmethod
    def affine(cls, slope, offset: float = 0.0) -> TerminalData:
        slope = np.atleast_1d(np.asarray(slope, dtype=float))
        return cls(TerminalKind.AFFINE, float(np.linalg.norm(slope)), 0.0,
                   slope=slope, offset=float(offset))

    @classmethod
    def neg_sqrt(cls) -> TerminalData:
        # Hessian eigenvalues lie in [-1, 0): 1 is a valid, if loose, semiconcavity constant.
        return cls(TerminalKind.NEG_SQRT, 1.0, 1.0)

    @classmethod
    def grid_sampled(cls, axes, values, semiconcavity_const: float | None = None) -> TerminalData:
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(len(a) for a in axes):
            raise ValueError("values shape does not match the grid axes")
        comps = []
        for i, a in enumerate(axes):
            q = np.abs(np.diff(values, axis=i)) / np.diff(a).reshape(
                [-1 if j == i else 1 for j in range(len(axes))])
            comps.append(q.max() if q.size else 0.0)
        # multilinear interpolant: each gradient component is a convex combination
        # of edge quotients along its axis
        lip = float(np.sqrt(np.sum(np.square(comps))))
        interp = RegularGridInterpolator(axes, values, method="linear",
                                         bounds_error=False, fill_value=None)
        return cls(TerminalKind.GRID_SAMPLED, lip, semiconcavity_const,
                   axes=axes, values=values, _interp=interp)

    @property
    def dimension(self) -> int | None:
        if self.kind is TerminalKind.AFFINE:
            return self.slope.shape[0]
        if self.kind is TerminalKind.GRID_SAMPLED:
            return len(self.axes)
        return None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind is TerminalKind.CONE_K:
            if y.shape[-1] < self.k:
                raise ValueError(f"cone with k={self.k} needs dimension >= k")
            return -np.linalg.norm(y[..., : self.k], axis=-1)
        if self.kind is TerminalKind.AFFINE:
            return y @ self.slope + self.offset
        if self.kind is TerminalKind.NEG_SQRT:
            return -np.sqrt(1.0 + np.sum(y * y, axis=-1))
        shape = y.shape[:-1]
        return self._interp(y.reshape(-1, y.shape[-1])).reshape(shape)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    hamiltonian: HamiltonianSpec
    terminal: TerminalData
    horizon: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon T must be finite and positive")
        if int(self.dimension) < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "dimension", int(self.dimension))
        term = self.terminal
        if term.kind is TerminalKind.CONE_K and term.k > self.dimension:
            raise ValueError(f"cone data needs k <= d (k={term.k}, d={self.dimension})")
        if term.dimension is not None and term.dimension != self.dimension:
            raise ValueError("terminal data dimension does not match the problem dimension")
        drift = self.hamiltonian.drift
        if drift is not None and drift.dimension not in (None, self.dimension):
            raise ValueError("drift dimension does not match the problem dimension")

    @property
    def is_pure_quadratic(self) -> bool:
        # a zero drift is the pure case under another name
        drift = self.hamiltonian.drift
        return drift is None or drift.kind == "zero"

    def g(self, y):
        return self.terminal(y)


@dataclass(frozen=True)
class AssumptionConstants:
    grad_bound: float
    semiconcavity: float | None
    convexity_lower: float
    convexity_upper: float
    radius: float


def assumption_constants(spec: ProblemSpec, radius: float) -> AssumptionConstants:
    """Gradient, semiconcavity and convexity constants valid on ``|p| <= radius``.

    The quadratic family has ``D^2_pp H = Id`` so ``theta = Theta = 1``. With a
    drift, the terminal constants are propagated by the usual Gronwall bounds
    along characteristics; ``semiconcavity`` stays ``None`` for data that is not
    known to be semiconcave (consumers then use the generated ``1/(T-t)`` bound).
    """
    term = spec.terminal
    if radius < term.lipschitz_const:
        raise ValueError(f"radius {radius} is below the terminal Lipschitz constant "
                         f"{term.lipschitz_const}")
    lip = term.lipschitz_const
    lam = term.semiconcavity_const
    drift = spec.hamiltonian.drift
    if drift is not None and drift.kind != "zero":
        growth = math.exp(drift.jacobian_bound * spec.horizon)
        lip = lip * growth
        if lam is not None:
            lam = (lam + lip * spec.horizon * drift.hessian_bound) * growth**2
    return AssumptionConstants(grad_bound=float(lip), semiconcavity=lam,
                               convexity_lower=1.0, convexity_upper=1.0,
                               radius=float(radius))


def make_problem(terminal: str = "cone", dimension: int = 1, horizon: float = 1.0,
                 k: int | None = None, slope=None, offset: float = 0.0,
                 drift: Drift | None = None) -> ProblemSpec:
    """Convenience constructor used by the CLI and the experiment harness."""
    kind = TerminalKind(terminal)
    if kind is TerminalKind.CONE_K:
        data = TerminalData.cone(dimension if k is None else k)
    elif kind is TerminalKind.AFFINE:
        s = np.zeros(dimension)
        if slope is not None:
            slope = np.atleast_1d(np.asarray(slope, dtype=float))
            s[: slope.size] = slope[:dimension]
        data = TerminalData.affine(s, offset)
    elif kind is TerminalKind.NEG_SQRT:
        data = TerminalData.neg_sqrt()
    else:
        raise ValueError("grid-sampled data must be built with TerminalData.grid_sampled")
    if drift is None or drift.kind == "zero":
        ham = HamiltonianSpec(HamiltonianKind.PURE_QUADRATIC)
    else:
        ham = HamiltonianSpec(HamiltonianKind.QUADRATIC_WITH_DRIFT, drift)
    return ProblemSpec(ham, data, float(horizon), int(dimension))
