"""The constrained Yamabe quotient: value, variations, residuals, distances.

Everything is phrased through the zero-homogeneous quotient

    Q(u) = ( u'Su + u'Cu + u'Bu ) / ||u||_{2*}^2 ,

whose restriction to the unit-volume manifold (||u||_{2*} = 1, u >= 0) is the
energy under study.  Zero-homogeneity is used systematically: the normalized
chart through a state v sends xi to (v+xi)/||v+xi||_{2*}, so the chart pullback
of Q is simply xi -> Q(v+xi), and raw nodal derivatives of Q double as chart
derivatives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .disc import DiscreteOperators, lp_norm
from .model import laplace_profile


@dataclass(frozen=True, eq=False)
class NormalizedState:
    """Nonnegative nodal function with unit critical-exponent norm."""

    u: np.ndarray
    ops: DiscreteOperators

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if np.any(u < -1e-12):
            raise ValueError("normalized state must be nonnegative")
        object.__setattr__(self, "u", np.clip(u, 0.0, None))
        nrm = lp_norm(self.ops, self.u, self.ops.two_star)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"state is not volume-normalized: ||u|| = {nrm!r}")


@dataclass(frozen=True)
class EnergyReport:
    Q: float
    dirichlet: float
    curvature_term: float
    boundary_term: float
    volume_norm: float


@dataclass(frozen=True)
class ELResidual:
    interior: float
    boundary: float
    C: float


def yamabe_quotient(ops: DiscreteOperators, u: np.ndarray) -> EnergyReport:
    """Energy quotient of a nonnegative, not identically zero nodal function."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("the energy is only defined for nonnegative functions")
    nrm = lp_norm(ops, u, ops.two_star)
    if nrm == 0.0:
        raise ValueError("the energy is undefined for the zero function")
    dir_term = float(u @ ops.stiffness @ u)
    curv_term = float(u @ ops.curv_mass @ u)
    bdry_term = float(u @ ops.bdry_mass @ u)
    return EnergyReport(
        Q=(dir_term + curv_term + bdry_term) / nrm**2,
        dirichlet=dir_term,
        curvature_term=curv_term,
        boundary_term=bdry_term,
        volume_norm=nrm,
    )


def normalize(ops: DiscreteOperators, u: np.ndarray) -> NormalizedState:
    """Scale a nonnegative function onto the unit-volume constraint manifold."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("cannot normalize a function with negative values")
    nrm = lp_norm(ops, u, ops.two_star)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero function")
    return NormalizedState(u=u / nrm, ops=ops)


def volume_covector(v: NormalizedState) -> np.ndarray:
    """p with p.u = integral of v^(2*-1) u dvol; the constraint normal at v."""
    return v.ops.vol_weights * v.u ** (v.ops.two_star - 1.0)


def project_tangent(v: NormalizedState, u: np.ndarray) -> np.ndarray:
    """Project onto the tangent space of the constraint manifold at v."""
    p = volume_covector(v)
    return u - float(p @ u) * v.u


def gradient(v: NormalizedState) -> np.ndarray:
    """First-variation covector G at v: G.eta is the derivative along eta.

    G = 2 (A v - Q(v) p) with A the full energy form and p the constraint
    normal; G annihilates the radial direction, so it agrees with the
    manifold-projected first variation on every direction.
    """
    ops = v.ops
    rep = yamabe_quotient(ops, v.u)
    return 2.0 * (ops.total_form @ v.u - rep.Q * volume_covector(v))


def hessian_form(v: NormalizedState) -> np.ndarray:
    """Projected second-variation form at v as a dense symmetric matrix.

    H[phi, eta] = 2 [ (P phi)' A (P eta)
                      - (2*-1) Q(v) integral v^(2*-2) (P phi)(P eta) dvol ]

    with P the tangent projection; rows and columns of the radial direction
    vanish identically.
    """
    ops = v.ops
    rep = yamabe_quotient(ops, v.u)
    ts = ops.two_star
    diag = ops.vol_weights * v.u ** (ts - 2.0)
    H0 = 2.0 * (ops.total_form - (ts - 1.0) * rep.Q * np.diag(diag))
    proj = np.eye(ops.N) - np.outer(v.u, volume_covector(v))
    H = proj.T @ H0 @ proj
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# raw derivatives of the homogeneous quotient (used by the correction solver
# and by finite-difference consistency tests)
# ---------------------------------------------------------------------------

def raw_value(ops: DiscreteOperators, w: np.ndarray) -> float:
    return yamabe_quotient(ops, w).Q


def raw_gradient(ops: DiscreteOperators, w: np.ndarray) -> np.ndarray:
    """Nodal gradient of the homogeneous quotient at a positive function w."""
    ts = ops.two_star
    m = ops.vol_weights
    Aw = ops.total_form @ w
    P = float(np.sum(m * w**ts))
    E = float(w @ Aw)
    p = m * w ** (ts - 1.0)
    return 2.0 * P ** (-2.0 / ts) * (Aw - (E / P) * p)


def raw_hessian(ops: DiscreteOperators, w: np.ndarray) -> np.ndarray:
    """Dense nodal Hessian of the homogeneous quotient at a positive w."""
    ts = ops.two_star
    m = ops.vol_weights
    A = ops.total_form
    Aw = A @ w
    P = float(np.sum(m * w**ts))
    E = float(w @ Aw)
    p = m * w ** (ts - 1.0)
    scale = P ** (-2.0 / ts)
    H = 2.0 * scale * (A - (ts - 1.0) * (E / P) * np.diag(m * w ** (ts - 2.0)))
    H -= (4.0 * scale / P) * (np.outer(Aw, p) + np.outer(p, Aw))
    H += (4.0 + 2.0 * ts) * (E / P) * (scale / P) * np.outer(p, p)
    return 0.5 * (H + H.T)


def energy_deficit(v: NormalizedState, xi: np.ndarray) -> float:
    """Q(v + xi) - Q(v), evaluated in incremental form.

    The direct difference of two quotient evaluations loses to round-off once
    it falls below ~1e-12; here the energy increment is expanded exactly
    (the numerator is a quadratic form) and the volume increment goes through
    expm1/log1p, keeping the difference accurate down to ~1e-15 relative to
    the energy scale.
    """
    ops = v.ops
    ts = ops.two_star
    m = ops.vol_weights
    xi = np.asarray(xi, dtype=float)
    w = v.u + xi
    if np.any(w < 0):
        raise ValueError("perturbed state leaves the nonnegative cone")

    A = ops.total_form
    Av = A @ v.u
    E_v = float(v.u @ Av)
    dE = 2.0 * float(xi @ Av) + float(xi @ (A @ xi))

    P_v = float(np.sum(m * v.u**ts))
    big = v.u > 1e-12 * np.max(v.u)
    delta_terms = np.empty_like(w)
    delta_terms[big] = v.u[big] ** ts * np.expm1(ts * np.log1p(xi[big] / v.u[big]))
    delta_terms[~big] = w[~big] ** ts - v.u[~big] ** ts
    delta = float(np.sum(m * delta_terms))

    growth = math.expm1((2.0 / ts) * math.log1p(delta / P_v))
    denom = P_v ** (2.0 / ts) * (1.0 + growth)
    return (dE - E_v * growth) / denom


# ---------------------------------------------------------------------------
# strong-form residual and metric distances
# ---------------------------------------------------------------------------

def el_residual(v: NormalizedState) -> ELResidual:
    """Strong-form Euler-Lagrange residual of the critical-point equation.

    interior: weighted L2 norm over interior nodes of
              -Lap v + c_n R v - Q(v) v^(2*-1)
    boundary: |dv/dnu + ((n-2)/2) h v| summed over boundary endpoints
    """
    ops = v.ops
    m = ops.model
    rep = yamabe_quotient(ops, v.u)
    lap = laplace_profile(m, ops.grid, v.u)
    res = -lap + ops.c_n * ops.curvature * v.u - rep.Q * v.u ** (ops.two_star - 1.0)
    if m.topology == "interval":
        sl = slice(1, -1)
    else:
        sl = slice(None)
    interior = math.sqrt(float(np.sum(res[sl] ** 2 * ops.vol_weights[sl])))

    boundary = 0.0
    for side, ep in m.boundary_endpoints():
        idx = 0 if side == "left" else ops.N - 1
        dnu = float(ops.normal_derivs[side] @ v.u)
        boundary += abs(dnu + 0.5 * (m.n - 2) * ep.h * v.u[idx])
    return ELResidual(interior=interior, boundary=boundary, C=rep.Q)


def metric_distance(ops: DiscreteOperators, u: np.ndarray, w: np.ndarray) -> float:
    """Critical-norm distance between the conformal metrics of u and w."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape or u.shape != ops.grid.nodes.shape:
        raise ValueError("mismatched grids in metric distance")
    return lp_norm(ops, u - w, ops.two_star)


def metric_distance_star(ops: DiscreteOperators, u: np.ndarray, w: np.ndarray,
                         y_estimate: float | None = None) -> float:
    """Curvature-weighted metric distance, meaningful when the constant is
    controlled by a nonnegative energy level; warns if told otherwise."""
    if y_estimate is not None and y_estimate < 0:
        warnings.warn("the weighted metric distance assumes a nonnegative "
                      f"energy level; estimate was {y_estimate}", stacklevel=2)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape or u.shape != ops.grid.nodes.shape:
        raise ValueError("mismatched grids in metric distance")
    delta = u - w
    val = float(delta @ ops.stiffness @ delta) / ops.c_n
    val += float(np.sum(ops.curvature * ops.vol_weights * delta**2))
    for side, ep in ops.model.boundary_endpoints():
        idx = 0 if side == "left" else ops.N - 1
        val += 2.0 * (ops.n - 1) * ep.h * ep.b * delta[idx] ** 2
    return math.sqrt(max(val, 0.0))


def w12_norm(ops: DiscreteOperators, u: np.ndarray) -> float:
    """Sobolev norm used for all reported distances: sqrt(u'(S+M)u)."""
    return ops.w12_norm(np.asarray(u, dtype=float))
