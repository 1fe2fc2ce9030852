"""``vvrate`` command line: solve, example, rate, entropy and gap subcommands.

Configuration is a flat ``key = value`` file with ``#`` comments and dotted
keys; command-line flags override file values, and the resolved configuration
is written to ``<out-dir>/resolved.cfg``. Exit codes: 0 success, 1 a checked
bound failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from vvrate import cole_hopf, fd_solver, fokker_planck, hopf_lax, rates
from vvrate.output import line_plot_svg, write_csv
from vvrate.problems import Drift, make_problem

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"config error: {key}: {message}")
        self.key = key


# key -> (flag, default, help); values stay strings until a command parses them
KEYS = {
    "terminal.kind": ("--terminal", "cone", "cone | affine | neg_sqrt"),
    "terminal.k": ("--k", "", "cone rank k (default: dimension)"),
    "terminal.slope": ("--slope", "1", "affine slope, comma separated"),
    "terminal.offset": ("--offset", "0", "affine offset"),
    "hamiltonian.drift": ("--drift", "zero", "zero | sinusoidal:A[:F] | affine:a[:c]"),
    "dimension": ("--d", "1", "space dimension"),
    "horizon": ("--T", "1", "terminal time"),
    "eps": ("--eps", "0.1", "viscosity (comma list allowed for gap)"),
    "t": ("--t", "0", "evaluation time"),
    "x": ("--x", "0", "evaluation point, comma separated (one value is broadcast)"),
    "engine": ("--engine", "exact", "exact | fd"),
    "dx": ("--dx", "0.01", "finite-difference spacing"),
    "radius": ("--radius", "1", "half-width of the output region"),
    "points_per_axis": ("--points-per-axis", "41", "output nodes per axis (exact engine)"),
    "emit_gap": ("--emit-gap", "0", "also write the inviscid field and the gap"),
    "example.k": ("--k", "2", "cone rank k"),
    "tau": ("--tau", "1", "time to the horizon"),
    "eps_min": ("--eps-min", "2^-14", "smallest eps"),
    "eps_max": ("--eps-max", "2^-4", "largest eps"),
    "nodes": ("--nodes", "200", "radial quadrature nodes"),
    "eps_grid": ("--eps-grid", "dyadic:6:14", "dyadic:m0:m1 or comma list"),
    "fokker_planck.drift": ("--drift", "zero", "zero | constant:v | pipeline"),
    "fokker_planck.hamiltonian_drift": ("--hamiltonian-drift", "zero",
                                        "drift of the Hamiltonian for the pipeline"),
    "L": ("--L", "", "gradient bound in the entropy bound (default: drift bound)"),
    "delta": ("--delta", "", "sup-convolution parameter (default: eps)"),
    "half_width": ("--half-width", "3", "Fokker-Planck domain half-width"),
    "n_points": ("--n-points", "20", "random sample points"),
}

COMMON_PROBLEM = ("terminal.kind", "terminal.k", "terminal.slope", "terminal.offset",
                  "hamiltonian.drift", "dimension", "horizon")
COMMANDS = {
    "solve": COMMON_PROBLEM + ("eps", "t", "engine", "dx", "radius", "points_per_axis",
                               "emit_gap"),
    "example": ("example.k", "tau", "eps_min", "eps_max", "nodes"),
    "rate": COMMON_PROBLEM + ("x", "t", "eps_grid", "engine", "dx"),
    "entropy": ("fokker_planck.drift", "fokker_planck.hamiltonian_drift", "terminal.kind",
                "terminal.k", "terminal.slope", "terminal.offset", "dimension", "horizon",
                "eps", "tau", "t", "x", "dx", "L", "delta", "half_width"),
    "gap": COMMON_PROBLEM + ("eps", "engine", "dx", "radius", "n_points"),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    seed: int = 0
    output_dir: str = "."
    explicit: set = field(default_factory=set)

    def resolved_text(self) -> str:
        lines = [f"command = {self.command}", f"seed = {self.seed}"]
        lines += [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    # typed accessors; every failure names the key

    def raw(self, key):
        return self.values[key].strip()

    def real(self, key, positive=False, nonneg=False):
        try:
            v = parse_real(self.raw(key))
        except ValueError:
            raise ConfigError(key, f"not a number: {self.raw(key)!r}") from None
        if not math.isfinite(v):
            raise ConfigError(key, "must be finite")
        if positive and not v > 0:
            raise ConfigError(key, f"must be > 0, got {v}")
        if nonneg and v < 0:
            raise ConfigError(key, f"must be >= 0, got {v}")
        return v

    def integer(self, key, minimum=None, maximum=None):
        try:
            v = int(self.raw(key))
        except ValueError:
            raise ConfigError(key, f"not an integer: {self.raw(key)!r}") from None
        if minimum is not None and v < minimum:
            raise ConfigError(key, f"must be >= {minimum}, got {v}")
        if maximum is not None and v > maximum:
            raise ConfigError(key, f"must be <= {maximum}, got {v}")
        return v

    def reals(self, key):
        try:
            return [parse_real(s) for s in self.raw(key).split(",") if s.strip()]
        except ValueError:
            raise ConfigError(key, f"not a list of numbers: {self.raw(key)!r}") from None

    def flag(self, key):
        v = self.raw(key).lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off", ""):
            return False
        raise ConfigError(key, f"not a boolean: {v!r}")


def parse_real(text: str) -> float:
    """Float, also accepting powers such as ``2^-14``."""
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return float(base) ** float(exp)
    return float(text)


def read_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}", "expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def _build_parser():
    parser = argparse.ArgumentParser(prog="vvrate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out-dir", default=".", help="directory for all outputs")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--plot", action="store_true", help="also write an SVG plot")
        for key in keys:
            flag, _, text = KEYS[key]
            if key == "emit_gap":
                p.add_argument(flag, dest=key, action="store_const", const="1", default=None,
                               help=text)
            else:
                p.add_argument(flag, dest=key, default=None, help=text)
    return parser


def resolve(argv) -> tuple[RunConfig, argparse.Namespace]:
    """Defaults < config file < flags."""
    args = _build_parser().parse_args(argv)
    keys = COMMANDS[args.command]
    values = {k: KEYS[k][1] for k in keys}
    explicit = set()
    seed = 0
    if args.config:
        for k, v in read_config_file(args.config).items():
            if k == "seed":
                try:
                    seed = int(v)
                except ValueError:
                    raise ConfigError("seed", f"not an integer: {v!r}") from None
            elif k == "command":
                # lets a resolved.cfg be fed back verbatim
                if v != args.command:
                    raise ConfigError(k, f"file is for '{v}', not '{args.command}'")
            elif k not in values:
                raise ConfigError(k, f"unknown key for '{args.command}'")
            else:
                values[k] = v
                explicit.add(k)
    for k in keys:
        v = getattr(args, k)
        if v is not None:
            values[k] = v
            explicit.add(k)
    if args.seed is not None:
        seed = args.seed
    return RunConfig(args.command, values, seed, args.out_dir, explicit), args


def _drift(cfg: RunConfig, key: str):
    text = cfg.raw(key)
    parts = text.split(":")
    try:
        if parts[0] == "zero" and len(parts) == 1:
            return None
        if parts[0] == "sinusoidal" and len(parts) in (2, 3):
            return Drift.sinusoidal(float(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0)
        if parts[0] == "affine" and len(parts) in (2, 3):
            d = cfg.integer("dimension", 1)
            c = float(parts[2]) if len(parts) == 3 else 0.0
            return Drift.affine(float(parts[1]) * np.eye(d), np.full(d, c))
    except ValueError:
        pass
    raise ConfigError(key, f"unrecognised drift {text!r}")


def _problem(cfg: RunConfig, drift_key="hamiltonian.drift"):
    kind = cfg.raw("terminal.kind")
    d = cfg.integer("dimension", 1)
    T = cfg.real("horizon", positive=True)
    if kind not in ("cone", "affine", "neg_sqrt"):
        raise ConfigError("terminal.kind", f"unknown terminal {kind!r}")
    k = None
    if kind == "cone":
        k = cfg.integer("terminal.k", 1, d) if cfg.raw("terminal.k") else d
    slope = None
    if kind == "affine":
        slope = cfg.reals("terminal.slope")
        if len(slope) == 1:
            slope = slope * d
        if len(slope) != d:
            raise ConfigError("terminal.slope", f"needs {d} components")
    return make_problem(kind, dimension=d, horizon=T, k=k, slope=slope,
                        offset=cfg.real("terminal.offset"), drift=_drift(cfg, drift_key))


def _point(cfg: RunConfig, d: int):
    x = cfg.reals("x")
    if len(x) == 1:
        x = x * d
    if len(x) != d:
        raise ConfigError("x", f"needs {d} components")
    return np.array(x)


def _eps_grid(cfg: RunConfig):
    text = cfg.raw("eps_grid")
    if text.startswith("dyadic:"):
        try:
            _, a, b = text.split(":")
            a, b = int(a), int(b)
        except ValueError:
            raise ConfigError("eps_grid", f"expected dyadic:m0:m1, got {text!r}") from None
        if not 0 <= a <= b:
            raise ConfigError("eps_grid", "need 0 <= m0 <= m1")
        return rates.dyadic_grid(a, b)
    grid = cfg.reals("eps_grid")
    if not grid or min(grid) <= 0:
        raise ConfigError("eps_grid", "eps values must be > 0")
    return grid


def _engine(cfg: RunConfig):
    e = cfg.raw("engine")
    if e not in ("exact", "fd"):
        raise ConfigError("engine", f"unknown engine {e!r}")
    return e


def _path(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _fd_grid(problem, dx, roi):
    probe = fd_solver.GridSpec(problem.dimension, roi, 16, roi)
    hw = fd_solver.required_half_width(problem, probe) + 2 * dx
    return fd_solver.GridSpec.with_spacing(problem.dimension, hw, dx, roi)


def cmd_solve(cfg: RunConfig, plot: bool) -> int:
    problem = _problem(cfg)
    eps = cfg.real("eps", positive=True)
    t = cfg.real("t", nonneg=True)
    if t > problem.horizon:
        raise ConfigError("t", "must not exceed the horizon")
    engine = _engine(cfg)
    if problem.dimension > 2:
        raise ConfigError("dimension", "field output supports d <= 2")
    if engine == "fd":
        dx = cfg.real("dx", positive=True)
        grid = _fd_grid(problem, dx, cfg.real("radius", positive=True))
        visc = fd_solver.roi_restrict(fd_solver.solve_viscous(problem, eps, grid, [t])[0])
        zero = fd_solver.roi_restrict(fd_solver.solve_inviscid(problem, grid, [t])[0])
    else:
        if not problem.is_pure_quadratic:
            raise ConfigError("engine", "the exact engine needs zero Hamiltonian drift")
        n = cfg.integer("points_per_axis", 17)
        r = cfg.real("radius", positive=True)
        grid = fd_solver.GridSpec(problem.dimension, r, n - 1, r)
        pts = grid.points()
        flat = pts.reshape(-1, problem.dimension)
        ve = np.array([cole_hopf.eval_cole_hopf(problem, eps, t, p).value for p in flat])
        v0 = hopf_lax.hopf_lax_field(problem, t)(flat)
        shape = pts.shape[:-1]
        visc = fd_solver.SolutionField(t, grid, ve.reshape(shape), eps)
        zero = fd_solver.SolutionField(t, grid, v0.reshape(shape), 0.0)
    visc.to_csv(_path(cfg, "field.csv"))
    if cfg.flag("emit_gap"):
        zero.to_csv(_path(cfg, "field_zero.csv"))
        fd_solver.field_difference(visc, zero).to_csv(_path(cfg, "gap.csv"))
    if plot and problem.dimension == 1:
        x = visc.axes[0]
        line_plot_svg(_path(cfg, "field.svg"),
                      [("phi_eps", x, visc.values, "line"), ("phi_0", x, zero.values, "line")],
                      f"t={t:g}, eps={eps:g}", "x", "value")
    return EXIT_OK


def example_rows(k: int, tau: float, eps_list, nodes: int = 200):
    """Rows ``(eps, gap, expansion, residual_over_eps)`` for the radial cone pipeline.

    ``residual_over_eps`` is ``|gap - expansion| / eps`` evaluated without the
    cancellation of the two columns, so it stays meaningful below rounding level.
    """
    ex = rates.example_expansion(k, tau)
    rows = []
    for e in eps_list:
        gap = cole_hopf.radial_gap(k, e, tau, nodes)
        pred = float(ex.predict(e))
        rows.append((e, gap, pred, abs(cole_hopf.radial_remainder(k, e, tau, nodes))))
    return rows


def nonincreasing(values) -> bool:
    return all(b <= a for a, b in zip(values[:-1], values[1:]))


def _dyadic_between(lo: float, hi: float):
    out, e = [], hi
    while e >= lo * (1 - 1e-12):
        out.append(e)
        e /= 2
    return out


def cmd_example(cfg: RunConfig, plot: bool) -> int:
    k = cfg.integer("example.k", 1, 64)
    tau = cfg.real("tau", positive=True)
    lo, hi = cfg.real("eps_min", positive=True), cfg.real("eps_max", positive=True)
    if lo > hi:
        raise ConfigError("eps_min", "must not exceed eps_max")
    nodes = cfg.integer("nodes", 8)
    rows = example_rows(k, tau, _dyadic_between(lo, hi), nodes)
    write_csv(_path(cfg, f"example_k{k}.csv"), ("eps", "gap", "expansion", "residual_over_eps"),
              rows)
    if plot:
        eps = [r[0] for r in rows]
        line_plot_svg(_path(cfg, f"example_k{k}.svg"),
                      [("gap/eps", eps, [r[1] / r[0] for r in rows], "points"),
                       ("expansion/eps", eps, [r[2] / r[0] for r in rows], "line")],
                      f"cone k={k}, tau={tau:g}", "eps", "gap / eps", logx=True)
    return EXIT_OK if nonincreasing([r[3] for r in rows]) else EXIT_FAIL


def _gap_rows(samples, d):
    header = ("eps", "t") + tuple(f"x{i + 1}" for i in range(d)) + (
        "phi_eps", "phi_zero", "gap", "method")
    rows = [(s.eps, s.t, *s.x, s.phi_eps, s.phi_zero, s.gap, s.method) for s in samples]
    return header, rows


def _write_bounds(cfg, report):
    write_csv(_path(cfg, "bounds.csv"), ("bound", "statement", "constant", "status"),
              [(c.name, c.statement, c.fitted, c.status) for c in report.checks])


def cmd_rate(cfg: RunConfig, plot: bool) -> int:
    problem = _problem(cfg)
    x = _point(cfg, problem.dimension)
    t = cfg.real("t", nonneg=True)
    if not t < problem.horizon:
        raise ConfigError("t", "must be below the horizon")
    grid = _eps_grid(cfg)
    engine = _engine(cfg)
    try:
        samples = rates.gap_sweep(problem, [(t, x)], grid, engine,
                                  fd_dx=cfg.real("dx", positive=True))
        fit = rates.fit_rate(samples)
    except ValueError as err:
        raise ConfigError("eps_grid" if "eps" in str(err) else "engine", str(err)) from None
    header, rows = _gap_rows(samples, problem.dimension)
    write_csv(_path(cfg, "gaps.csv"), header, rows)
    write_csv(_path(cfg, "ratefit.csv"),
              ("t",) + tuple(f"x{i + 1}" for i in range(problem.dimension))
              + ("A", "B", "residual_rms", "n_eps"),
              [(fit.t, *fit.x, fit.coeff_eps_log, fit.coeff_eps, fit.residual_rms,
                len(fit.eps_grid))])
    report = rates.check_bounds(problem, samples)
    _write_bounds(cfg, report)
    if plot:
        eps = [s.eps for s in samples]
        line_plot_svg(_path(cfg, "rate.svg"),
                      [("gap", eps, [s.gap for s in samples], "points"),
                       ("fit", eps, list(fit.predict(eps)), "line")],
                      "gap and rate fit", "eps", "gap", logx=True)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_gap(cfg: RunConfig, plot: bool) -> int:
    problem = _problem(cfg)
    eps_list = cfg.reals("eps")
    if not eps_list or min(eps_list) <= 0:
        raise ConfigError("eps", "eps values must be > 0")
    engine = _engine(cfg)
    n = cfg.integer("n_points", 0)
    radius = cfg.real("radius", positive=True)
    rng = np.random.default_rng(cfg.seed)
    T, d = problem.horizon, problem.dimension
    extra = [(rng.uniform(0, T), rng.uniform(-radius, radius, d)) for _ in range(n)]
    samples = []
    for e in eps_list:
        pts = rates.standard_points(problem, e, extra)
        samples += rates.gap_sweep(problem, pts, [e], engine, fd_dx=cfg.real("dx", positive=True))
    header, rows = _gap_rows(samples, d)
    write_csv(_path(cfg, "gaps.csv"), header, rows)
    report = rates.check_bounds(problem, samples)
    _write_bounds(cfg, report)
    if plot:
        line_plot_svg(_path(cfg, "gaps.svg"),
                      [("gap", [T - s.t for s in samples], [s.gap for s in samples], "points")],
                      "gap against time to horizon", "T - t", "gap")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_entropy(cfg: RunConfig, plot: bool) -> int:
    d = cfg.integer("dimension", 1, 2)
    eps = cfg.real("eps", positive=True)
    tau = cfg.real("tau", positive=True)
    t = cfg.real("t", nonneg=True)
    T = cfg.real("horizon", positive=True)
    if not t + tau <= T:
        raise ConfigError("tau", "t + tau must not exceed the horizon")
    x = _point(cfg, d)
    dx = cfg.real("dx", positive=True)
    grid = fd_solver.GridSpec.with_spacing(d, cfg.real("half_width", positive=True), dx,
                                           roi_radius=0.0)
    text = cfg.raw("fokker_planck.drift")
    if text == "zero":
        drift = fokker_planck.DriftField.zero()
    elif text.startswith("constant:"):
        try:
            v = [float(s) for s in text.split(":", 1)[1].split(",")]
        except ValueError:
            raise ConfigError("fokker_planck.drift", f"bad constant drift {text!r}") from None
        drift = fokker_planck.DriftField.constant(v * d if len(v) == 1 else v)
    elif text == "pipeline":
        problem = _problem(cfg, "fokker_planck.hamiltonian_drift")
        delta = cfg.real("delta", positive=True) if cfg.raw("delta") else eps
        drift = fokker_planck.pipeline_drift(problem, eps, delta, grid, t)
    else:
        raise ConfigError("fokker_planck.drift", f"unknown drift {text!r}")
    L = cfg.real("L", nonneg=True) if cfg.raw("L") else drift.bound
    record = sorted({t + tau, T})
    trace = fokker_planck.solve_fokker_planck(drift, eps, t, x, grid, record)
    trace.to_csv(_path(cfg, "entropy.csv"))
    lhs, rhs, holds = fokker_planck.check_entropy_bound(trace, tau, L)
    header = ["tau", "L", "lhs", "rhs", "holds"]
    row = [tau, L, lhs, rhs, int(holds)]
    if drift.laplacian is not None:
        header += ["integrated_laplacian", "laplacian_lower_bound"]
        row += [fokker_planck.integrated_laplacian(trace, tau, T),
                fokker_planck.laplacian_lower_bound(eps, tau, L, d)]
    write_csv(_path(cfg, "entropy_bound.csv"), header, [row])
    print(f"holds={int(holds)}")
    if plot:
        line_plot_svg(_path(cfg, "entropy.svg"),
                      [("entropy", list(trace.times), list(trace.entropy), "line")],
                      "entropy along the flow", "s", "entropy")
    return EXIT_OK if holds else EXIT_FAIL


HANDLERS = {"solve": cmd_solve, "example": cmd_example, "rate": cmd_rate,
            "entropy": cmd_entropy, "gap": cmd_gap}


def main(argv=None) -> int:
    try:
        cfg, args = resolve(sys.argv[1:] if argv is None else argv)
        os.makedirs(cfg.output_dir, exist_ok=True)
        with open(_path(cfg, "resolved.cfg"), "w", newline="\n") as fh:
            fh.write(cfg.resolved_text())
        return HANDLERS[cfg.command](cfg, args.plot)
    except ConfigError as err:
        print(err, file=sys.stderr)
        return EXIT_CONFIG
    except (fd_solver.ConfigurationError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"config error: output: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
