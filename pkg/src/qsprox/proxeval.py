"""Scaled proximal operators of quadratic-support functions.

For an SPD metric H, prox_g^H(z) minimizes g(x) + 1/2 ||x - z||_H^2.  With
g in dual form the minimizer is recovered from the conic quadratic program

    min_y  1/2 y^T (B H^{-1} B^T) y - (d + B z)^T y   s.t.  A y - b in K

as x = z - H^{-1} B^T y, and the optimal value of the regularized problem
(the Moreau-Yosida envelope at z) equals the negated optimal dual
objective.

``unscaled_prox`` holds the closed-form rules (soft threshold, block soft
threshold, simplex-style ball projection, one-sided norm) used as oracles
and as the fast path of the outer solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from qsprox import ipm, linops
from qsprox.qscalc import ProxKind, QSFunction


class ClosedFormUnavailable(RuntimeError):
    """Raised when a prox kind has no closed-form rule."""


@dataclass
class ProxResult:
    x: np.ndarray
    y: np.ndarray
    envelope: float
    residual: float
    recovery_residual: float
    iterations: int
    status: str
    trace: List[ipm.TraceEntry] = field(default_factory=list)


def dual_qp(g: QSFunction, H: Optional[linops.Metric], z) -> ipm.ConicQP:
    """Conic QP whose solution y gives prox_g^H(z) = z - H^{-1} B^T y."""
    z = np.asarray(z, dtype=float)
    c = g.B @ z + g.d
    B = g.B

    if H is None:
        def Qapply(y):
            return np.zeros_like(y)
    else:
        def Qapply(y):
            return B @ H.solve(B.T @ y)

    return ipm.ConicQP(
        Qapply=Qapply, c=c, A=g.A, b=g.b, K=g.K,
        lsolver=lambda u: linops.build_L(g, H, u),
    )


def prox(g: QSFunction, H: linops.Metric, z, tol: float = 1e-8,
         max_iter: int = 100) -> ProxResult:
    """Evaluate prox_g^H(z) by solving the dual conic QP."""
    z = np.asarray(z, dtype=float)
    qp = dual_qp(g, H, z)
    res = ipm.solve(qp, ipm.IPMConfig(tol=tol, max_iter=max_iter))
    x = z - H.solve(g.B.T @ res.y)
    recovery = float(np.linalg.norm(H.apply(x - z) + g.B.T @ res.y))
    return ProxResult(
        x=x,
        y=res.y,
        envelope=-res.objective,
        residual=max(res.norm_dual, res.norm_primal, res.gap),
        recovery_residual=recovery,
        iterations=res.iterations,
        status=res.status,
        trace=res.trace,
    )


def envelope_value(g: QSFunction, H: linops.Metric, z, x) -> float:
    """Direct envelope value g(x) + 1/2 ||x - z||_H^2 (closed-form g only)."""
    if g.closed_form is None:
        raise ClosedFormUnavailable("no closed form for the outer term")
    diff = np.asarray(x) - np.asarray(z)
    return g.closed_form(np.asarray(x)) + 0.5 * (diff @ H.apply(diff))


# ---------------------------------------------------------------------------
# Closed-form unscaled proxes
# ---------------------------------------------------------------------------

def soft_threshold(z, w):
    return np.sign(z) * np.maximum(np.abs(z) - w, 0.0)


def block_soft_threshold(z, w, sizes):
    out = np.array(z, dtype=float)
    off = 0
    for ni in sizes:
        nb = np.linalg.norm(out[off:off + ni])
        out[off:off + ni] *= max(0.0, 1.0 - w / nb) if nb > 0.0 else 0.0
        off += ni
    return out


def project_l1_ball(z, radius: float = 1.0):
    """Euclidean projection onto {x : ||x||_1 <= radius} (sort-based)."""
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    if a.sum() <= radius:
        return z.copy()
    srt = np.sort(a)[::-1]
    cs = np.cumsum(srt) - radius
    k = np.arange(1, a.size + 1)
    idx = np.nonzero(srt - cs / k > 0)[0][-1]
    theta = cs[idx] / (idx + 1.0)
    return np.sign(z) * np.maximum(a - theta, 0.0)


def unscaled_prox(kind: ProxKind, z) -> np.ndarray:
    """prox of the tagged function in the identity metric."""
    z = np.asarray(z, dtype=float)
    w = kind.weight
    if kind.kind == "l1":
        return soft_threshold(z, w)
    if kind.kind == "group_l2":
        sizes = kind.sizes if kind.sizes else (z.size,)
        return block_soft_threshold(z, w, sizes)
    if kind.kind == "l1_ball":
        return project_l1_ball(z)
    if kind.kind == "orthant_dist":
        pos = np.maximum(z, 0.0)
        return np.minimum(z, 0.0) + block_soft_threshold(pos, w, (z.size,))
    raise ClosedFormUnavailable(f"no closed-form prox for kind {kind.kind!r}")
