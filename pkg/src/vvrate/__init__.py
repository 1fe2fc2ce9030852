"""Vanishing-viscosity gaps for quadratic Hamilton-Jacobi equations.

Exact viscous (Cole-Hopf) and inviscid (Hopf-Lax) evaluators, a monotone
finite-difference solver, sup-convolution regularisation, a Fokker-Planck
entropy tracker and a rate-fitting harness.
"""

from vvrate.problems import (Drift, HamiltonianKind, HamiltonianSpec, ProblemSpec,
                             TerminalData, TerminalKind, make_problem)

__all__ = ["Drift", "HamiltonianKind", "HamiltonianSpec", "ProblemSpec", "TerminalData",
           "TerminalKind", "make_problem"]
__version__ = "0.1.0"
