"""Primitives for products of nonnegative orthants and second-order cones.

A cone product K partitions a vector of length M into blocks.  Orthant
blocks use elementwise (diagonal) arithmetic; second-order cone blocks
x = (x0, xbar) in Q^m = {x : ||xbar||_2 <= x0} use the arrow / quadratic
representation of the associated Jordan algebra:

    arrow(x)  = [[x0, xbar^T], [xbar, x0*I]]
    P(x)      = 2*x*x^T - (x^T J x) * J,   J = diag(1, -I)

The scaling operator attached to an interior point u is

    block(u) = diag(u)        on orthant blocks
    block(u) = P(u)^2         on second-order blocks

and the Nesterov-Todd scaling point u of an interior pair (s, v) is the
unique interior u with block(u) v = s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHANT = "orthant"
SECOND_ORDER = "second_order"


class ConeError(ValueError):
    """Raised for dimension mismatches or points outside the cone interior."""


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in (ORTHANT, SECOND_ORDER):
            raise ConeError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ConeError("cone dimension must be positive")
        if self.kind == SECOND_ORDER and self.dim < 2:
            raise ConeError("second-order cone needs dimension >= 2")


def orthant(dim: int) -> Cone:
    return Cone(ORTHANT, dim)


def second_order(dim: int) -> Cone:
    return Cone(SECOND_ORDER, dim)


class ConeProduct:
    """Ordered product of cone blocks with precomputed slices."""

    def __init__(self, blocks):
        blocks = tuple(blocks)
        if not blocks:
            raise ConeError("cone product needs at least one block")
        self.blocks = blocks
        self.slices = []
        off = 0
        for blk in blocks:
            self.slices.append(slice(off, off + blk.dim))
            off += blk.dim
        self.total_dim = off
        # Barrier degree: orthant blocks count one per coordinate, each
        # second-order block counts one regardless of its dimension.
        self.degree = sum(b.dim if b.kind == ORTHANT else 1 for b in blocks)

    def __repr__(self):
        parts = ", ".join(f"{b.kind}({b.dim})" for b in self.blocks)
        return f"ConeProduct([{parts}])"

    def __eq__(self, other):
        return isinstance(other, ConeProduct) and self.blocks == other.blocks

    def __mul__(self, other: "ConeProduct") -> "ConeProduct":
        return ConeProduct(self.blocks + other.blocks)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_dim,):
            raise ConeError(f"expected vector of length {self.total_dim}, got shape {x.shape}")
        return x


def product(*cones_or_products) -> ConeProduct:
    """Concatenate cones and/or cone products into one ConeProduct."""
    blocks = []
    for item in cones_or_products:
        if isinstance(item, ConeProduct):
            blocks.extend(item.blocks)
        else:
            blocks.append(item)
    return ConeProduct(blocks)


# -- elementary per-block helpers (second-order algebra) --

def _soc_gamma2(x):
    return x[0] * x[0] - x[1:] @ x[1:]


def _soc_quad_apply(x, w):
    # P(x) w = 2 (x.w) x - (x^T J x) J w
    g2 = _soc_gamma2(x)
    jw = w.copy()
    jw[1:] = -jw[1:]
    return 2.0 * (x @ w) * x - g2 * jw


def _soc_inverse(x):
    g2 = _soc_gamma2(x)
    if g2 <= 0.0 or x[0] <= 0.0:
        raise ConeError("point not in the interior of the second-order cone")
    out = x / g2
    out[1:] = -out[1:]
    return out


def _soc_sqrt(x):
    g2 = _soc_gamma2(x)
    if g2 <= 0.0 or x[0] <= 0.0:
        raise ConeError("point not in the interior of the second-order cone")
    t = np.sqrt(0.5 * (x[0] + np.sqrt(g2)))
    out = np.empty_like(x)
    out[0] = t
    out[1:] = x[1:] / (2.0 * t)
    return out


# -- public operations --

def identity_element(K: ConeProduct) -> np.ndarray:
    """Jordan identity: all-ones on orthant blocks, (1, 0, ..., 0) on SOC blocks."""
    e = np.zeros(K.total_dim)
    for blk, sl in zip(K.blocks, K.slices):
        if blk.kind == ORTHANT:
            e[sl] = 1.0
        else:
            e[sl.start] = 1.0
    return e


def contains(K: ConeProduct, x, strict: bool = False, tol: float = 0.0) -> bool:
    """Membership test; with strict=True, interior membership.

    tol relaxes (non-strict) or tightens (strict) each block test by an
    absolute margin, so boundary points within tol resolve consistently.
    """
    x = K._check(x)
    for blk, sl in zip(K.blocks, K.slices):
        xb = x[sl]
        if blk.kind == ORTHANT:
            ok = np.all(xb > tol) if strict else np.all(xb >= -tol)
        else:
            margin = xb[0] - np.linalg.norm(xb[1:])
            ok = margin > tol if strict else margin >= -tol
        if not ok:
            return False
    return True


def jordan_product(K: ConeProduct, a, b) -> np.ndarray:
    """Blockwise Jordan product: a*b on orthants, arrow(a) b on SOC blocks."""
    a = K._check(a)
    b = K._check(b)
    out = np.empty_like(a)
    for blk, sl in zip(K.blocks, K.slices):
        ab, bb = a[sl], b[sl]
        if blk.kind == ORTHANT:
            out[sl] = ab * bb
        else:
            out[sl.start] = ab @ bb
            out[sl.start + 1:sl.stop] = ab[0] * bb[1:] + bb[0] * ab[1:]
    return out


def jordan_solve(K: ConeProduct, lam, q) -> np.ndarray:
    """Solve arrow(lam) y = q blockwise (Jordan division)."""
    lam = K._check(lam)
    q = K._check(q)
    out = np.empty_like(q)
    for blk, sl in zip(K.blocks, K.slices):
        lb, qb = lam[sl], q[sl]
        if blk.kind == ORTHANT:
            if np.any(lb == 0.0):
                raise ConeError("singular orthant element in jordan_solve")
            out[sl] = qb / lb
        else:
            g2 = _soc_gamma2(lb)
            if g2 == 0.0 or lb[0] == 0.0:
                raise ConeError("singular second-order element in jordan_solve")
            y0 = (lb[0] * qb[0] - lb[1:] @ qb[1:]) / g2
            out[sl.start] = y0
            out[sl.start + 1:sl.stop] = (qb[1:] - y0 * lb[1:]) / lb[0]
    return out


def block_apply(K: ConeProduct, u, w) -> np.ndarray:
    """Apply block(u): diag(u) on orthants, P(u)^2 on second-order blocks."""
    u = K._check(u)
    w = K._check(w)
    out = np.empty_like(w)
    for blk, sl in zip(K.blocks, K.slices):
        ub, wb = u[sl], w[sl]
        if blk.kind == ORTHANT:
            out[sl] = ub * wb
        else:
            out[sl] = _soc_quad_apply(ub, _soc_quad_apply(ub, wb))
    return out


def block_solve(K: ConeProduct, u, q) -> np.ndarray:
    """Apply block(u)^{-1}, using P(u)^{-1} = P(u^{-1}) on SOC blocks."""
    u = K._check(u)
    q = K._check(q)
    out = np.empty_like(q)
    for blk, sl in zip(K.blocks, K.slices):
        ub, qb = u[sl], q[sl]
        if blk.kind == ORTHANT:
            if np.any(ub <= 0.0):
                raise ConeError("block_solve needs strictly positive orthant scaling")
            out[sl] = qb / ub
        else:
            ui = _soc_inverse(ub)
            out[sl] = _soc_quad_apply(ui, _soc_quad_apply(ui, qb))
    return out


def block_dense(K: ConeProduct, u) -> np.ndarray:
    """Dense matrix of block(u); intended for tests and dense fallbacks."""
    u = K._check(u)
    M = K.total_dim
    out = np.zeros((M, M))
    for blk, sl in zip(K.blocks, K.slices):
        ub = u[sl]
        if blk.kind == ORTHANT:
            out[sl, sl] = np.diag(ub)
        else:
            m = blk.dim
            J = np.diag(np.concatenate(([1.0], -np.ones(m - 1))))
            P = 2.0 * np.outer(ub, ub) - (ub @ J @ ub) * J
            out[sl, sl] = P @ P
    return out


def nt_scaling(K: ConeProduct, s, v) -> np.ndarray:
    """Scaling point u of the interior pair (s, v): block(u) v = s.

    Orthant blocks: the elementwise ratio u = s / v.  Second-order blocks:
    the Jordan square root of the classical scaling point w, built from the
    J-normalized pair (Tsuchiya / Alizadeh-Goldfarb construction):

        wbar = (s/gs + J v/gv) / sqrt(2 (1 + s.v/(gs gv)))
        w    = sqrt(gs/gv) * wbar,      gs^2 = s^T J s,  gv^2 = v^T J v

    so that P(w) v = s, and u = w^{1/2} gives block(u) = P(u)^2 = P(w).
    """
    s = K._check(s)
    v = K._check(v)
    u = np.empty_like(s)
    for blk, sl in zip(K.blocks, K.slices):
        sb, vb = s[sl], v[sl]
        if blk.kind == ORTHANT:
            if np.any(sb <= 0.0) or np.any(vb <= 0.0):
                raise ConeError("nt_scaling needs strictly interior s and v")
            u[sl] = sb / vb
        else:
            g2s = _soc_gamma2(sb)
            g2v = _soc_gamma2(vb)
            if g2s <= 0.0 or g2v <= 0.0 or sb[0] <= 0.0 or vb[0] <= 0.0:
                raise ConeError("nt_scaling needs strictly interior s and v")
            gs = np.sqrt(g2s)
            gv = np.sqrt(g2v)
            sn = sb / gs
            vn = vb / gv
            jvn = vn.copy()
            jvn[1:] = -jvn[1:]
            gamma = np.sqrt(0.5 * (1.0 + sn @ vn))
            wbar = (sn + jvn) / (2.0 * gamma)
            w = np.sqrt(gs / gv) * wbar
            u[sl] = _soc_sqrt(w)
    return u


def scaling_apply(K: ConeProduct, u, x) -> np.ndarray:
    """Apply W = block(u)^{1/2}: diag(sqrt(u)) on orthants, P(u) on SOC blocks."""
    u = K._check(u)
    x = K._check(x)
    out = np.empty_like(x)
    for blk, sl in zip(K.blocks, K.slices):
        ub, xb = u[sl], x[sl]
        if blk.kind == ORTHANT:
            out[sl] = np.sqrt(ub) * xb
        else:
            out[sl] = _soc_quad_apply(ub, xb)
    return out


def scaling_solve(K: ConeProduct, u, x) -> np.ndarray:
    """Apply W^{-1} = block(u)^{-1/2}."""
    u = K._check(u)
    x = K._check(x)
    out = np.empty_like(x)
    for blk, sl in zip(K.blocks, K.slices):
        ub, xb = u[sl], x[sl]
        if blk.kind == ORTHANT:
            out[sl] = xb / np.sqrt(ub)
        else:
            out[sl] = _soc_quad_apply(_soc_inverse(ub), xb)
    return out


def max_step(K: ConeProduct, x, dx, frac: float = 1.0) -> float:
    """Largest alpha <= 1 with x + t*dx in K for t in [0, alpha], damped by frac.

    x must be strictly interior.  Returns min(1, frac * t_boundary) where
    t_boundary is the first crossing of the cone boundary (inf if none).
    """
    x = K._check(x)
    dx = K._check(dx)
    t = np.inf
    for blk, sl in zip(K.blocks, K.slices):
        xb, db = x[sl], dx[sl]
        if blk.kind == ORTHANT:
            neg = db < 0.0
            if np.any(neg):
                t = min(t, np.min(xb[neg] / -db[neg]))
        else:
            # gamma2(x + t dx) = a t^2 + 2 b t + c with c > 0 at an interior x;
            # the first positive root is where the boundary is reached.
            jd = db.copy()
            jd[1:] = -jd[1:]
            a = db @ jd
            b = xb @ jd
            c = _soc_gamma2(xb)
            roots = []
            if abs(a) > 1e-300:
                disc = b * b - a * c
                if disc >= 0.0:
                    sq = np.sqrt(disc)
                    roots = [(-b - sq) / a, (-b + sq) / a]
            elif b < 0.0:
                roots = [-c / (2.0 * b)]
            pos = [r for r in roots if r > 0.0]
            if pos:
                t = min(t, min(pos))
    return min(1.0, frac * t)
