"""Spectral analysis of the second variation at a critical state.

The generalized eigenproblem H w = lambda M w is solved on the tangent space
of the constraint manifold by deflation: an M-orthonormal tangent basis is
built explicitly (a Householder frame in mass-scaled coordinates), the
projected Hessian is diagonalized there, and eigenvectors are mapped back.
Eigenvectors are therefore tangent and M-orthonormal by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .disc import DiscreteOperators
from . import energy


class KernelThresholdError(RuntimeError):
    """The kernel threshold falls inside a near-degenerate cluster."""


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray       # ascending
    eigenvectors: np.ndarray      # columns, M-orthonormal, tangent
    v: energy.NormalizedState
    grad_norm: float

    @property
    def k(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class KernelSplit:
    K_basis: np.ndarray           # columns (N x kernel_dim), possibly empty
    lambda1: float
    kernel_dim: int
    threshold: float


def mass_scaled_complement(ops: DiscreteOperators, covectors: list[np.ndarray]) -> np.ndarray:
    """M-orthonormal basis of the joint annihilator of the given covectors.

    A vector u is kept orthogonal to each covector c in the sense c.u = 0;
    the returned columns satisfy u_i' M u_j = delta_ij.  Needs the mass to be
    positive definite, which excludes models with pole endpoints.
    """
    mvec = ops.vol_weights
    if np.any(mvec <= 0):
        raise ValueError(
            "mass-orthonormal bases need a positive-definite mass matrix; "
            "models with pole endpoints carry a zero-mass node")
    wd = np.sqrt(mvec)
    cols = [np.asarray(c, dtype=float) / wd for c in covectors]
    k = len(cols)
    frame = np.column_stack(cols + [np.eye(ops.N)[:, : ops.N - k]])
    q = np.linalg.qr(frame, mode="complete")[0]
    return q[:, k:] / wd[:, None]


def tangent_basis(v: energy.NormalizedState, extra_vectors: tuple = ()) -> np.ndarray:
    """M-orthonormal basis of the tangent space at v, minus extra directions.

    Extra directions are given as nodal vectors and removed in the M inner
    product (their covector is M x vector).
    """
    covs = [energy.volume_covector(v)]
    for vec in extra_vectors:
        covs.append(v.ops.vol_weights * np.asarray(vec, dtype=float))
    return mass_scaled_complement(v.ops, covs)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        scale = np.max(np.abs(col))
        if scale == 0:
            continue
        nz = np.nonzero(np.abs(col) > 1e-8 * scale)[0]
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def eigen_decompose(v: energy.NormalizedState, k: int) -> SpectrumReport:
    """Lowest k eigenpairs of the projected Hessian against the mass form."""
    ops = v.ops
    if not 1 <= k <= ops.N - 1:
        raise ValueError(f"k must lie in [1, {ops.N - 1}], got {k}")
    G = energy.gradient(v)
    gram_chol = sla.cho_factor(ops.w12_gram)
    r = sla.cho_solve(gram_chol, G)
    grad_norm = math.sqrt(max(float(G @ r), 0.0))
    if grad_norm > 1e-6:
        warnings.warn(
            f"spectrum requested at a non-critical state (grad norm {grad_norm:.3e}); "
            "reported eigenvalues are not a second-variation spectrum",
            stacklevel=2)

    B = tangent_basis(v)
    H_red = B.T @ energy.hessian_form(v) @ B
    H_red = 0.5 * (H_red + H_red.T)
    lam, y = sla.eigh(H_red, subset_by_index=(0, k - 1))
    vecs = _fix_signs(B @ y)
    return SpectrumReport(eigenvalues=lam, eigenvectors=vecs, v=v, grad_norm=grad_norm)


def _gram_schmidt_m(ops: DiscreteOperators, cols: np.ndarray) -> np.ndarray:
    mvec = ops.vol_weights
    out = cols.copy()
    for j in range(out.shape[1]):
        for i in range(j):
            out[:, j] -= float(out[:, i] @ (mvec * out[:, j])) * out[:, i]
        nrm = math.sqrt(float(out[:, j] @ (mvec * out[:, j])))
        out[:, j] /= nrm
    return out


def kernel_split(spec: SpectrumReport, tol_rel: float = 1e-6) -> KernelSplit:
    """Split the computed spectrum into a kernel and its complement.

    Modes with |lambda| below tol_rel times the largest computed magnitude
    form the kernel.  A gap ratio of at least 10 between the last kernel mode
    and the first retained one is demanded; anything tighter means the
    threshold cannot be trusted at this resolution.
    """
    lam = spec.eigenvalues
    scale = float(np.max(np.abs(lam)))
    threshold = tol_rel * scale
    in_kernel = np.abs(lam) <= threshold
    kernel_dim = int(np.sum(in_kernel))
    if kernel_dim == spec.k:
        raise KernelThresholdError(
            "every computed mode falls below the kernel threshold; "
            "increase k or tighten tol_rel")
    retained = lam[~in_kernel]
    lambda1 = float(retained[np.argmin(np.abs(retained))])
    if kernel_dim > 0:
        last_kernel = float(np.max(np.abs(lam[in_kernel])))
        if last_kernel > 0 and abs(lambda1) / last_kernel < 10.0:
            raise KernelThresholdError(
                f"kernel threshold splits a near-degenerate cluster: "
                f"|last kernel| = {last_kernel:.3e}, |first retained| = {abs(lambda1):.3e}; "
                "change the tolerance or the resolution")
        K = _gram_schmidt_m(spec.v.ops, spec.eigenvectors[:, in_kernel])
        K = _fix_signs(K)
    else:
        K = np.zeros((spec.eigenvectors.shape[0], 0))
    return KernelSplit(K_basis=K, lambda1=lambda1, kernel_dim=kernel_dim,
                       threshold=threshold)
