"""Grids, spectral differentiation, quadrature, and bilinear-form assembly.

Interval models use Chebyshev-Lobatto nodes with Clenshaw-Curtis weights and
the dense Chebyshev differentiation matrix; circle models use uniform nodes
with trapezoid weights and the Fourier differentiation matrix.  All forms are
assembled dense: the grids are desk-scale (N of a few hundred) and the
eigenvalue work downstream needs full matrices anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SymmetricModel, eval_profile

MIN_NODES = 16


@dataclass(frozen=True, eq=False)
class Grid:
    nodes: np.ndarray
    quad_weights: np.ndarray
    diff_matrix: np.ndarray
    kind: str  # "lobatto_interval" | "uniform_periodic"
    length: float

    @property
    def N(self) -> int:
        return self.nodes.size


def chebyshev_nodes_diff(N: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Lobatto nodes on [0, length], increasing, and d/dt matrix."""
    n = N - 1
    j = np.arange(N)
    x = np.cos(np.pi * j / n)  # decreasing on [-1, 1]
    c = np.ones(N)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    X = np.tile(x, (N, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N))
    D -= np.diag(D.sum(axis=1))
    # t = (length/2)(1 - x) is increasing in j; d/dt = -(2/length) d/dx
    nodes = 0.5 * length * (1.0 - x)
    nodes[0] = 0.0
    nodes[-1] = length
    return nodes, -(2.0 / length) * D


def clenshaw_curtis_weights(N: int, length: float) -> np.ndarray:
    """Clenshaw-Curtis weights for the N Lobatto nodes on [0, length]."""
    n = N - 1
    theta = np.pi * np.arange(N) / n
    w = np.zeros(N)
    ii = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k * k - 1)
        v -= np.cos(n * theta[ii]) / (n * n - 1)
    else:
        w[0] = w[-1] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k * k - 1)
    w[ii] = 2.0 * v / n
    return 0.5 * length * w


def fourier_diff(N: int, length: float) -> np.ndarray:
    """Spectral d/dt matrix for N uniform nodes on a circle of circumference length."""
    j = np.arange(N)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 0.5 * (-1.0) ** diff / np.tan(np.pi * diff / N)
    np.fill_diagonal(D, 0.0)
    return (2.0 * np.pi / length) * D


def build_grid(m: SymmetricModel, N: int) -> Grid:
    """Grid matched to the model topology; N >= 16, even on circles."""
    if N < MIN_NODES:
        raise ValueError(f"N below minimum {MIN_NODES}: got {N}")
    if m.topology == "circle":
        if N % 2 != 0:
            raise ValueError(f"periodic grids require even N, got {N}")
        T = m.length
        nodes = T * np.arange(N) / N
        weights = np.full(N, T / N)
        return Grid(nodes=nodes, quad_weights=weights, diff_matrix=fourier_diff(N, T),
                    kind="uniform_periodic", length=T)
    nodes, D = chebyshev_nodes_diff(N, m.length)
    weights = clenshaw_curtis_weights(N, m.length)
    return Grid(nodes=nodes, quad_weights=weights, diff_matrix=D,
                kind="lobatto_interval", length=m.length)


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Assembled quadratic forms of the boundary Yamabe energy on a grid.

    stiffness   S with u'Su ~ integral |u'|^2 s dt
    mass        M (diagonal) with u'Mu ~ integral u^2 a dt
    curv_mass   C with u'Cu ~ integral c_n R u^2 a dt
    bdry_mass   B with u'Bu ~ sum over boundary ends of ((n-2)/2) h b u(e)^2
    normal_derivs  per-boundary-end row functionals approximating du/dnu
    """

    model: SymmetricModel
    grid: Grid
    stiffness: np.ndarray
    mass: np.ndarray
    curv_mass: np.ndarray
    bdry_mass: np.ndarray
    normal_derivs: dict
    vol_weights: np.ndarray = field(repr=False)      # diag of M
    density: np.ndarray = field(repr=False)          # a at nodes
    curvature: np.ndarray = field(repr=False)        # R at nodes
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def two_star(self) -> float:
        return self.model.two_star

    @property
    def c_n(self) -> float:
        return self.model.c_n

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def total_form(self) -> np.ndarray:
        """The energy form S + C + B."""
        if "total" not in self._cache:
            self._cache["total"] = self.stiffness + self.curv_mass + self.bdry_mass
        return self._cache["total"]

    @property
    def w12_gram(self) -> np.ndarray:
        """Gram matrix of the Sobolev norm: S + M."""
        if "w12" not in self._cache:
            self._cache["w12"] = self.stiffness + self.mass
        return self._cache["w12"]

    @property
    def volume(self) -> float:
        return float(self.vol_weights.sum())

    def w12_norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(float(u @ (self.w12_gram @ u)), 0.0))


def assemble_operators(m: SymmetricModel, grid: Grid) -> DiscreteOperators:
    """Assemble all forms for a model on its grid.

    The stiffness is built as D' diag(s q) D and symmetrized, which is
    positive semidefinite up to round-off and annihilates constants exactly.
    Pole endpoints need no constraint row: the vanishing density removes
    their quadrature weight, which is the natural weak regularity condition.
    """
    nodes = grid.nodes
    q = grid.quad_weights
    D = grid.diff_matrix

    a = eval_profile(m.density, nodes, grid, m.grid)
    interior = a[1:-1] if m.topology == "interval" else a
    if np.any(interior < 0):
        raise ValueError("density must be nonnegative at interior nodes")
    s = eval_profile(m.grad_density, nodes, grid, m.grid)
    curv = eval_profile(m.scalar_curvature, nodes, grid, m.grid)
    sigma = eval_profile(m.lap_scale, nodes, grid, m.grid)

    S = D.T @ ((np.clip(s, 0.0, None) * q)[:, None] * D)
    S = 0.5 * (S + S.T)
    if m.topology == "circle":
        # The even-N Fourier derivative matrix annihilates the Nyquist
        # sawtooth, leaving a spurious zero-energy mode.  Restore the exact
        # Dirichlet energy of the Nyquist interpolant cos(pi N t / T) as a
        # rank-one term; for constant density it is exactly orthogonal to
        # every smooth mode, so the low spectrum is untouched.
        N = grid.N
        k_nyq = math.pi * N / m.length
        e_nyq = 0.5 * k_nyq**2 * float(q @ np.clip(s, 0.0, None))
        y = np.where(np.arange(N) % 2 == 0, 1.0, -1.0) / N
        S += e_nyq * np.outer(y, y)
    # Push the round-off row sums into the diagonal so constants are
    # annihilated exactly; near-constant states otherwise inherit a gradient
    # noise floor of order eps * ||S||.
    S -= np.diag(S @ np.ones(grid.N))
    S = 0.5 * (S + S.T)

    mvec = np.clip(a, 0.0, None) * q
    M = np.diag(mvec)
    C = np.diag(m.c_n * curv * mvec)

    B = np.zeros((grid.N, grid.N))
    normal_derivs = {}
    for side, ep in m.boundary_endpoints():
        idx = 0 if side == "left" else grid.N - 1
        sign = -1.0 if side == "left" else 1.0
        normal_derivs[side] = math.sqrt(max(float(sigma[idx]), 0.0)) * sign * D[idx, :]
        B[idx, idx] += 0.5 * (m.n - 2) * ep.h * ep.b

    return DiscreteOperators(
        model=m, grid=grid, stiffness=S, mass=M, curv_mass=C, bdry_mass=B,
        normal_derivs=normal_derivs, vol_weights=mvec, density=a, curvature=curv,
    )


def lp_norm(ops: DiscreteOperators, u: np.ndarray, p: float) -> float:
    """(integral |u|^p a dt)^(1/p) via the grid quadrature."""
    if not np.isfinite(p) or p < 1:
        raise ValueError(f"p must be a finite real >= 1, got {p}")
    u = np.asarray(u, dtype=float)
    return float(np.sum(ops.vol_weights * np.abs(u) ** p)) ** (1.0 / p)
