"""Scaled proximal operators of quadratic-support functions.

The library evaluates prox_g^H(z) = argmin_x 0.5*||z - x||_H^2 + g(x) for
quadratic-support functions g by solving the dual conic quadratic program
with a structure-exploiting primal-dual interior-point method, and wraps
that evaluator in an inexact proximal quasi-Newton solver for composite
problems min f(x) + g(x).
"""

from qsprox import cones, ipm, linops, pqn, problems, proxeval, qscalc

__all__ = ["cones", "linops", "qscalc", "ipm", "proxeval", "pqn", "problems"]
__version__ = "0.1.0"
