import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import affine_value, cone1_viscous
from vvrate.cole_hopf import (QuadratureMode, QuadratureSpec, eval_cole_hopf,
                              eval_cole_hopf_radial, grad_cole_hopf, hessian_cole_hopf,
                              log_sphere_factor, radial_gap, radial_remainder)
from vvrate.problems import (Drift, HamiltonianKind, HamiltonianSpec, ProblemSpec,
                             TerminalData, make_problem)

PURE = HamiltonianSpec(HamiltonianKind.PURE_QUADRATIC)
CONE1 = make_problem("cone", dimension=1, k=1)


def test_zero_data_gives_zero():
    prob = make_problem("affine", dimension=2, slope=[0.0, 0.0])
    for eps in (1.0, 0.1, 1e-3):
        assert eval_cole_hopf(prob, eps, 0.2, [0.7, -1.1]).value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(grad_cole_hopf(prob, eps, 0.2, [0.7, -1.1]), 0, atol=1e-12)
        np.testing.assert_allclose(hessian_cole_hopf(prob, eps, 0.2, [0.7, -1.1]), 0,
                                   atol=1e-10)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.floats(-1, 1),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.sampled_from([0.5, 0.05, 0.005]))
def test_affine_has_zero_gap(slope, offset, x, eps):
    prob = make_problem("affine", dimension=2, slope=slope, offset=offset)
    val = eval_cole_hopf(prob, eps, 0.25, x).value
    assert val == pytest.approx(affine_value(slope, offset, x, 0.75), abs=1e-10)
    np.testing.assert_allclose(grad_cole_hopf(prob, eps, 0.25, x), slope, atol=1e-9)
    np.testing.assert_allclose(hessian_cole_hopf(prob, eps, 0.25, x), 0, atol=1e-8)


def test_cone_origin_closed_form():
    val = eval_cole_hopf(CONE1, 0.01, 0.0, [0.0]).value
    assert val == pytest.approx(-0.50693147, abs=1e-8)
    assert val == pytest.approx(float(cone1_viscous(0.0, 0.01, 1.0)), abs=1e-13)


@given(st.floats(-2, 2), st.sampled_from([0.3, 0.05, 0.01, 0.002]), st.floats(0.0, 0.9))
def test_cone_matches_oracle_everywhere(x, eps, t):
    val = eval_cole_hopf(CONE1, eps, t, [x]).value
    assert val == pytest.approx(float(cone1_viscous(x, eps, 1 - t)), abs=1e-11)


def test_cone_gradient_symmetric_at_origin():
    assert grad_cole_hopf(CONE1, 0.05, 0.0, [0.0])[0] == pytest.approx(0.0, abs=1e-12)


def test_terminal_time_returns_data():
    assert eval_cole_hopf(CONE1, 0.1, 1.0, [0.4]).value == -0.4
    with pytest.raises(ValueError):
        grad_cole_hopf(CONE1, 0.1, 1.0, [0.4])


def test_argument_errors():
    with pytest.raises(ValueError):
        eval_cole_hopf(CONE1, 0.0, 0.0, [0.0])
    with pytest.raises(ValueError):
        eval_cole_hopf(CONE1, 0.1, 1.5, [0.0])
    with pytest.raises(ValueError):
        eval_cole_hopf(make_problem("cone", dimension=1, drift=Drift.sinusoidal(0.3)),
                       0.1, 0.0, [0.0])
    with pytest.raises(ValueError):
        eval_cole_hopf(make_problem("neg_sqrt", dimension=4), 0.1, 0.0, np.zeros(4))
    with pytest.raises(ValueError):
        QuadratureSpec(nodes_per_axis=4)
    with pytest.raises(ValueError):
        QuadratureSpec(truncation_radius_multiplier=2)


def test_tiny_eps_is_stable():
    val = eval_cole_hopf(CONE1, 1e-12, 0.0, [0.0]).value
    assert math.isfinite(val)
    assert val == pytest.approx(-0.5, abs=1e-10)


def test_radial_examples():
    assert eval_cole_hopf_radial(CONE1, 0.01, 1.0).value == pytest.approx(-0.50693147, abs=1e-8)
    eps = 1e-6
    assert eval_cole_hopf_radial(CONE1, eps, 1.0).value + 0.5 == pytest.approx(
        -eps * math.log(2), abs=1e-9)


def test_radial_k2_constant():
    cone2 = make_problem("cone", dimension=2, k=2)
    for eps in (1e-4, 1e-5, 1e-6):
        coeff = radial_gap(2, eps, 1.0) / eps - 0.5 * math.log(eps)
        assert coeff == pytest.approx(-0.9189385, abs=5 * eps + 1e-6)
    val = eval_cole_hopf_radial(cone2, 1e-3, 1.0).value
    assert val == pytest.approx(-0.5 + radial_gap(2, 1e-3, 1.0), abs=1e-12)


def test_radial_agrees_with_tensor():
    for k, d in ((1, 1), (2, 2), (2, 3), (3, 3)):
        prob = make_problem("cone", dimension=d, k=k)
        x = np.zeros(d)
        if d > k:
            x[-1] = 0.7
        tensor = eval_cole_hopf(prob, 0.1, 0.0, x).value
        radial = eval_cole_hopf_radial(prob, 0.1, 1.0, x=x).value
        assert tensor == pytest.approx(radial, abs=1e-8)
        mode = QuadratureSpec(mode=QuadratureMode.RADIAL_CONE)
        assert eval_cole_hopf(prob, 0.1, 0.0, x, mode).value == radial


def test_radial_rejects_off_axis_point():
    prob = make_problem("cone", dimension=2, k=1)
    with pytest.raises(ValueError, match="unsupported point"):
        eval_cole_hopf_radial(prob, 0.1, 1.0, x=[0.2, 0.0])
    with pytest.raises(ValueError):
        eval_cole_hopf_radial(make_problem("neg_sqrt", dimension=1), 0.1, 1.0)


def test_radial_supports_high_k():
    prob = make_problem("cone", dimension=40, k=40)
    gap = radial_gap(40, 1e-3, 1.0)
    val = eval_cole_hopf_radial(prob, 1e-3, 1.0).value
    assert math.isfinite(gap) and val == pytest.approx(-0.5 + gap, abs=1e-10)


def test_log_sphere_factor():
    assert log_sphere_factor(1) == pytest.approx(math.log(2))
    assert log_sphere_factor(2) == pytest.approx(math.log(2 * math.pi))
    assert log_sphere_factor(3) == pytest.approx(math.log(4 * math.pi))


def test_record_identity():
    prob = make_problem("neg_sqrt", dimension=2)
    eps, t = 0.07, 0.3
    rec = eval_cole_hopf(prob, eps, t, [0.4, -0.2])
    tau = 1 - t
    assert rec.value == pytest.approx(eps * 2 / 2 * math.log(2 * math.pi * eps * tau)
                                      - eps * rec.log_partition, abs=1e-12)


def test_monotone_in_data():
    rng = np.random.default_rng(11)
    axes = (np.linspace(-6, 6, 49),)
    for _ in range(100):
        v1 = np.cumsum(rng.uniform(-0.25, 0.25, size=49))
        v2 = v1 + rng.uniform(0, 0.5, size=49)
        p1 = ProblemSpec(PURE, TerminalData.grid_sampled(axes, v1), 1.0, 1)
        p2 = ProblemSpec(PURE, TerminalData.grid_sampled(axes, v2), 1.0, 1)
        x = [rng.uniform(-1, 1)]
        eps = rng.choice([0.2, 0.05])
        assert eval_cole_hopf(p1, eps, 0.5, x).value <= eval_cole_hopf(p2, eps, 0.5, x).value + 1e-12


@pytest.mark.parametrize("terminal", ["cone", "neg_sqrt"])
def test_gradient_bound(terminal):
    prob = make_problem(terminal, dimension=1)
    rng = np.random.default_rng(12)
    for x, t, eps in zip(rng.uniform(-2, 2, 1000), rng.uniform(0, 0.95, 1000),
                         rng.choice([0.3, 0.03, 0.003], 1000)):
        assert abs(grad_cole_hopf(prob, eps, t, [x])[0]) <= prob.terminal.lipschitz_const + 1e-6


def test_gradient_bound_two_dimensional():
    prob = make_problem("cone", dimension=2, k=2)
    rng = np.random.default_rng(13)
    for x in rng.uniform(-1, 1, size=(100, 2)):
        assert np.linalg.norm(grad_cole_hopf(prob, 0.05, 0.2, x)) <= 1 + 1e-6


@pytest.mark.parametrize("terminal", ["cone", "neg_sqrt"])
def test_semiconcavity_generation(terminal):
    prob = make_problem(terminal, dimension=1)
    rng = np.random.default_rng(14)
    for x, h, t in zip(rng.uniform(-2, 2, 1000), rng.uniform(-0.5, 0.5, 1000),
                       rng.uniform(0, 0.9, 1000)):
        vals = [eval_cole_hopf(prob, 0.05, t, [y]) for y in (x + h, x - h, x)]
        second = vals[0].value + vals[1].value - 2 * vals[2].value
        err = sum(v.est_quadrature_error for v in vals) + 1e-12
        assert second <= h * h / (1 - t) + err


def test_hessian_bounded_by_inverse_time():
    rng = np.random.default_rng(15)
    for terminal in ("cone", "neg_sqrt"):
        prob = make_problem(terminal, dimension=2, k=2)
        for x in rng.uniform(-1, 1, size=(30, 2)):
            hess = hessian_cole_hopf(prob, 0.05, 0.4, x)
            np.testing.assert_allclose(hess, hess.T, atol=0)
            assert np.linalg.eigvalsh(hess).max() <= 1 / 0.6 + 1e-9


def test_hessian_matches_finite_differences():
    prob = make_problem("neg_sqrt", dimension=1)
    h = 1e-3
    for x in (-0.8, 0.0, 0.5):
        v = [eval_cole_hopf(prob, 0.1, 0.3, [y]).value for y in (x + h, x, x - h)]
        fd = (v[0] - 2 * v[1] + v[2]) / h**2
        assert hessian_cole_hopf(prob, 0.1, 0.3, [x])[0, 0] == pytest.approx(fd, abs=1e-5)


def test_quadrature_convergence():
    rng = np.random.default_rng(16)
    prob = make_problem("neg_sqrt", dimension=1)
    for _ in range(100):
        x, t, eps = rng.uniform(-2, 2), rng.uniform(0, 0.9), rng.choice([0.3, 0.03])
        n = int(rng.choice([64, 128]))
        a = eval_cole_hopf(prob, eps, t, [x], QuadratureSpec(nodes_per_axis=n))
        b = eval_cole_hopf(prob, eps, t, [x], QuadratureSpec(nodes_per_axis=2 * n))
        assert abs(a.value - b.value) <= a.est_quadrature_error + 1e-13


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(17)
    h = 1e-4
    for terminal in ("cone", "neg_sqrt"):
        prob = make_problem(terminal, dimension=2, k=1)
        for _ in range(50):
            x, t = rng.uniform(-1.5, 1.5, size=2), rng.uniform(0, 0.8)
            grad = grad_cole_hopf(prob, 0.1, t, x)
            fd = [(eval_cole_hopf(prob, 0.1, t, x + h * e).value
                   - eval_cole_hopf(prob, 0.1, t, x - h * e).value) / (2 * h) for e in np.eye(2)]
            np.testing.assert_allclose(grad, fd, atol=1e-5)


def test_remainder_closed_forms():
    # k = 1: -log Phi(a); k = 2: -log(Phi(a) + phi(a)/a), a = sqrt(tau/eps)
    from scipy.stats import norm
    for eps in (0.5, 0.1, 0.02):
        a = math.sqrt(1 / eps)
        assert radial_remainder(1, eps, 1.0) == pytest.approx(-norm.logcdf(a), rel=1e-12)
        ref = -math.log(norm.cdf(a) + norm.pdf(a) / a)
        assert radial_remainder(2, eps, 1.0) == pytest.approx(ref, rel=1e-9, abs=1e-16)


@pytest.mark.parametrize("k", [1, 2, 3, 7])
def test_remainder_matches_gap_difference(k):
    from vvrate.rates import example_expansion
    exp = example_expansion(k, 0.8)
    for eps in (0.3, 0.05, 0.01):
        direct = (radial_gap(k, eps, 0.8) - float(exp.predict(eps))) / eps
        assert radial_remainder(k, eps, 0.8) == pytest.approx(direct, abs=1e-12)
