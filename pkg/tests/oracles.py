"""Closed-form reference values used across the tests."""

import math

import numpy as np
from scipy.special import log_ndtr


def cone1_viscous(x, eps, tau):
    """Viscous value for g(y) = -|y| in one dimension.

    Splitting the Gaussian integral at y = 0 and completing the square on each
    half gives two normal CDFs.
    """
    x = np.asarray(x, dtype=float)
    s = math.sqrt(eps * tau)
    return -tau / 2 - eps * np.logaddexp(x / eps + log_ndtr((x + tau) / s),
                                         -x / eps + log_ndtr((tau - x) / s))


def cone1_gap_origin(eps, tau=1.0):
    """Gap at x = 0: -eps log(2 Phi(sqrt(tau/eps)))."""
    return -eps * (math.log(2.0) + float(log_ndtr(math.sqrt(tau / eps))))


def cone_inviscid(x, k, tau):
    x = np.asarray(x, dtype=float)
    return -np.linalg.norm(x[..., :k], axis=-1) - tau / 2


def affine_value(slope, offset, x, tau):
    slope = np.asarray(slope, dtype=float)
    return np.asarray(x, dtype=float) @ slope + offset - tau * slope @ slope / 2


def neg_sqrt_hessian(x):
    """Hessian of -sqrt(1 + |x|^2)."""
    x = np.asarray(x, dtype=float)
    q = 1.0 + x @ x
    return -(q * np.eye(x.size) - np.outer(x, x)) / q**1.5
