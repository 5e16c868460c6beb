"""Constrained minimization of the quotient over the unit-volume manifold.

Projected gradient descent with a Sobolev (S+M) Riesz preconditioner and
Armijo backtracking, optionally polished by a damped projected Newton method.
Convergence is declared on the preconditioned gradient norm alone: degenerate
minimizers move arbitrarily slowly along their kernel, so state movement is
not a usable criterion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .disc import DiscreteOperators, assemble_operators, build_grid
from .model import SymmetricModel, dim_constant, sphere_area
from . import energy


class ConvergenceError(RuntimeError):
    """No minimization run reached the requested gradient tolerance."""


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 500
    grad_tol: float = 1e-11
    step0: float = 1.0
    newton_polish: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True, eq=False)
class MinimizeReport:
    v: energy.NormalizedState
    Y_est: float
    grad_norm: float
    residual: energy.ELResidual
    iterations: int
    converged: bool
    start_index: int = 0
    q_history: tuple = field(default=())


ARMIJO_C1 = 1e-4
NEWTON_SWITCH = 1e-2
MAX_BACKTRACK = 60


def _dual_grad_norm(G: np.ndarray, gram_chol) -> tuple[float, np.ndarray]:
    """Sobolev dual norm of a covector and its Riesz representative."""
    r = sla.cho_solve(gram_chol, G)
    return math.sqrt(max(float(G @ r), 0.0)), r


def _tangent_complement_basis(p: np.ndarray) -> np.ndarray:
    """Euclidean-orthonormal basis of {u : p.u = 0} via a Householder frame."""
    N = p.size
    q = np.linalg.qr(np.column_stack([p, np.eye(N)[:, : N - 1]]), mode="complete")[0]
    return q[:, 1:]


def minimize_energy(ops: DiscreteOperators, u0: np.ndarray,
                    opts: MinimizeOptions = MinimizeOptions()) -> MinimizeReport:
    """Minimize the quotient starting from a nonnegative nonzero function."""
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0) or not np.any(u0 > 0):
        raise ValueError("starting point must be nonnegative and nonzero")

    gram_chol = sla.cho_factor(ops.w12_gram)
    state = energy.normalize(ops, u0)
    q_val = energy.yamabe_quotient(ops, state.u).Q
    history = [q_val]
    iterations = 0

    G = energy.gradient(state)
    grad_norm, riesz = _dual_grad_norm(G, gram_chol)
    switch_tol = max(opts.grad_tol, NEWTON_SWITCH) if opts.newton_polish else opts.grad_tol

    # --- preconditioned descent phase
    while grad_norm > switch_tol and iterations < opts.max_iters:
        eta = -energy.project_tangent(state, riesz)
        slope = float(G @ eta)
        if slope >= 0:
            break
        alpha = opts.step0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            trial = np.clip(state.u + alpha * eta, 0.0, None)
            if not np.any(trial > 0):
                alpha *= 0.5
                continue
            trial_state = energy.normalize(ops, trial)
            trial_q = energy.yamabe_quotient(ops, trial_state.u).Q
            if trial_q <= q_val + ARMIJO_C1 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        state, q_val = trial_state, trial_q
        history.append(q_val)
        iterations += 1
        G = energy.gradient(state)
        grad_norm, riesz = _dual_grad_norm(G, gram_chol)

    # --- damped Newton polish on the tangent space
    # Near a degenerate minimizer the energy decrease per step falls under the
    # evaluation noise long before the gradient does, so steps are accepted on
    # gradient-norm decrease with a round-off allowance on the energy.
    if opts.newton_polish and grad_norm > opts.grad_tol:
        mu = 0.0
        newton_iters = 0
        bonus = 12  # keep polishing below tolerance while progress is rapid
        while (grad_norm > opts.grad_tol or bonus > 0) and newton_iters < 80 \
                and iterations < opts.max_iters + 80:
            B = _tangent_complement_basis(energy.volume_covector(state))
            H_red = B.T @ energy.hessian_form(state) @ B
            g_red = B.T @ G
            gram_red = B.T @ ops.w12_gram @ B
            accepted = False
            for _ in range(40):
                try:
                    # on a degenerate kernel the undamped system is singular;
                    # a garbage step is simply rejected and damping increased
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", sla.LinAlgWarning)
                        step = sla.solve(H_red + mu * gram_red, -g_red,
                                         assume_a="sym")
                except sla.LinAlgError:
                    mu = max(10.0 * mu, 1e-10)
                    continue
                trial = np.clip(state.u + B @ step, 0.0, None)
                if not np.any(trial > 0):
                    mu = max(10.0 * mu, 1e-10)
                    continue
                trial_state = energy.normalize(ops, trial)
                trial_q = energy.yamabe_quotient(ops, trial_state.u).Q
                trial_norm, trial_riesz = _dual_grad_norm(energy.gradient(trial_state), gram_chol)
                if trial_norm < grad_norm and trial_q <= q_val + 1e-13 * max(abs(q_val), 1.0):
                    accepted = True
                    break
                mu = max(10.0 * mu, 1e-10)
            if not accepted:
                break
            if grad_norm <= opts.grad_tol and trial_norm > 0.5 * grad_norm:
                bonus = 0
            state, q_val = trial_state, min(trial_q, q_val)
            history.append(q_val)
            iterations += 1
            newton_iters += 1
            mu *= 0.01
            grad_norm = trial_norm
            G = energy.gradient(state)

    return MinimizeReport(
        v=state,
        Y_est=q_val,
        grad_norm=grad_norm,
        residual=energy.el_residual(state),
        iterations=iterations,
        converged=bool(grad_norm <= opts.grad_tol),
        q_history=tuple(history),
    )


def laplace_modes(ops: DiscreteOperators, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest k nonconstant modes of the weighted Laplace operator.

    Solved through the pencil M w = theta (S+M) w, whose right-hand matrix is
    positive definite even when the density vanishes at a pole, with
    eigenvalue conversion lambda = (1-theta)/theta.
    """
    theta, vecs = sla.eigh(ops.mass, ops.w12_gram)
    order = np.argsort(-theta)  # descending: constant first, then low modes
    lam = []
    modes = []
    for idx in order[1: k + 1]:
        th = theta[idx]
        lam.append((1.0 - th) / th)
        w = vecs[:, idx]
        mnorm = math.sqrt(float(w @ ops.mass @ w))
        modes.append(w / mnorm if mnorm > 0 else w)
    return np.array(lam), np.column_stack(modes)


def random_starts(ops: DiscreteOperators, starts: int, seed: int) -> list[np.ndarray]:
    """Constant start plus seeded smooth perturbations of it.

    Perturbations put Gaussian coefficients on the five lowest Laplace modes,
    are scaled to 10 percent of the constant and clipped nonnegative.
    """
    out = [np.ones(ops.N)]
    if starts > 1:
        rng = np.random.default_rng(seed)
        _, modes = laplace_modes(ops, min(5, ops.N - 2))
        for _ in range(starts - 1):
            combo = modes @ rng.standard_normal(modes.shape[1])
            peak = np.max(np.abs(combo))
            if peak > 0:
                combo = combo / peak
            out.append(np.clip(1.0 + 0.1 * combo, 0.0, None))
    return out


def run_multistart(m: SymmetricModel, N: int, starts: int,
                   opts: MinimizeOptions) -> list[MinimizeReport]:
    """One report per start, converged or not, in start order."""
    if starts < 1:
        raise ValueError("starts must be at least 1")
    grid = build_grid(m, N)
    ops = assemble_operators(m, grid)
    reports = []
    for j, u0 in enumerate(random_starts(ops, starts, opts.seed)):
        rep = minimize_energy(ops, u0, opts)
        reports.append(MinimizeReport(
            v=rep.v, Y_est=rep.Y_est, grad_norm=rep.grad_norm,
            residual=rep.residual, iterations=rep.iterations,
            converged=rep.converged, start_index=j, q_history=rep.q_history,
        ))
    return reports


def estimate_yamabe_constant(m: SymmetricModel, N: int, starts: int = 1,
                             opts: MinimizeOptions = MinimizeOptions()) -> MinimizeReport:
    """Multi-start minimization; returns the lowest converged report.

    Ties are broken by lower gradient norm, then lower start index, so the
    reduction over starts is order-independent.
    """
    converged = [r for r in run_multistart(m, N, starts, opts) if r.converged]
    if not converged:
        raise ConvergenceError(f"no start converged on {m.label} at N={N}")
    return min(converged, key=lambda r: (r.Y_est, r.grad_norm, r.start_index))


def hemisphere_comparison_value(n: int) -> float:
    """Energy of the round half-sphere in this quotient normalization.

    The hypothesis of the stability theory asks the model's constant to lie
    strictly below this level; it is reported for reference only.
    """
    return dim_constant(n) * n * (n - 1) * (sphere_area(n) / 2.0) ** (2.0 / n)
