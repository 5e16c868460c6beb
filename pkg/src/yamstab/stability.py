"""End-to-end stability experiment: deficits versus distance to minimizers.

States near (and not so near) a minimizer are sampled in three families --
along the Hessian kernel, transverse to it, and mixed -- and each sample is
recorded as a (energy deficit, normalized Sobolev distance) pair.  The
stability exponent is the slope of the lower envelope of that scatter in
log-log coordinates, and the envelope constant is compared against the
coercivity floor predicted by the smallest nonzero Hessian eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.optimize

from .lsred import (FitRejectedError, InsufficientDataError, NOISE_FLOOR,
                    ReductionChart, solve_correction)
from .spectrum import KernelSplit, SpectrumReport, mass_scaled_complement
from . import energy


@dataclass(frozen=True, eq=False)
class MinimizerFamily:
    """Local representation of the minimizer set near a base minimizer.

    Either a single state, or the critical slices of a reduction chart at a
    stored set of kernel coordinates; `continuum` marks the integrable case
    where the whole chart image minimizes and the distance search may refine
    over kernel coordinates continuously.
    """

    v: energy.NormalizedState
    y_est: float
    members: tuple
    delta: float
    chart: ReductionChart | None = None
    critical_phis: tuple = ()
    continuum: bool = False
    split: KernelSplit | None = None
    spectrum: SpectrumReport | None = None

    @property
    def kernel_dim(self) -> int:
        return self.split.kernel_dim if self.split is not None else 0


def single_family(v: energy.NormalizedState, *, delta: float | None = None,
                  split: KernelSplit | None = None,
                  spectrum: SpectrumReport | None = None,
                  member_tol: float = 1e-9) -> MinimizerFamily:
    """Family consisting of one minimizer; sampling data rides along."""
    _check_member(v, member_tol)
    ops = v.ops
    if delta is None:
        delta = 0.1 * ops.w12_norm(v.u)
    y_est = energy.yamabe_quotient(ops, v.u).Q
    return MinimizerFamily(v=v, y_est=y_est, members=(v,), delta=float(delta),
                           split=split, spectrum=spectrum)


def reduced_family(chart: ReductionChart, critical_phis, *, continuum: bool = True,
                   spectrum: SpectrumReport | None = None,
                   member_tol: float | None = None) -> MinimizerFamily:
    """Family of chart slices at stored critical kernel coordinates."""
    if member_tol is None:
        member_tol = 1e4 * chart.newton_tol
    ops = chart.ops
    members = []
    y_est = chart.q0
    for phi in critical_phis:
        z = solve_correction(chart, phi)
        member = energy.normalize(ops, chart.v.u + chart.kernel_vector(phi) + z)
        _check_member(member, member_tol)
        q_mem = energy.yamabe_quotient(ops, member.u).Q
        if abs(q_mem - chart.q0) > 1e-8 * max(abs(chart.q0), 1.0):
            raise ValueError(
                f"stored kernel coordinate {phi} is not energy-critical: "
                f"Q differs from the base level by {q_mem - chart.q0:.3e}")
        members.append(member)
    if not members:
        raise ValueError("a reduced family needs at least one stored coordinate")
    return MinimizerFamily(v=chart.v, y_est=y_est, members=tuple(members),
                           delta=chart.radius, chart=chart,
                           critical_phis=tuple(np.atleast_1d(np.asarray(p, dtype=float))
                                               for p in critical_phis),
                           continuum=continuum, split=chart.split, spectrum=spectrum)


def _check_member(state: energy.NormalizedState, tol: float):
    ops = state.ops
    G = energy.gradient(state)
    r = sla.cho_solve(sla.cho_factor(ops.w12_gram), G)
    gn = math.sqrt(max(float(G @ r), 0.0))
    if gn > tol:
        raise ValueError(f"family member has gradient norm {gn:.3e} > {tol:.1e}; "
                         "not a usable minimizer")


def distance_to_minimizers(u: energy.NormalizedState, fam: MinimizerFamily) -> float:
    """Normalized Sobolev distance from u to the represented minimizer set.

    Discrete members are searched exhaustively; in the continuum (integrable)
    case the kernel coordinate is refined with a derivative-free local search
    seeded at the best stored coordinate.
    """
    if not fam.members:
        raise ValueError("empty minimizer family")
    ops = u.ops
    u_norm = ops.w12_norm(u.u)
    best = min(ops.w12_norm(u.u - mem.u) for mem in fam.members)
    if fam.continuum and fam.chart is not None:
        chart = fam.chart
        idx = int(np.argmin([ops.w12_norm(u.u - mem.u) for mem in fam.members]))

        def objective(phi):
            if np.linalg.norm(phi) > 0.99 * chart.radius:
                return 1e6
            try:
                z = solve_correction(chart, phi)
            except Exception:
                return 1e6
            cand = energy.normalize(ops, chart.v.u + chart.kernel_vector(phi) + z)
            return ops.w12_norm(u.u - cand.u)

        res = scipy.optimize.minimize(
            objective, np.asarray(fam.critical_phis[idx], dtype=float),
            method="Nelder-Mead",
            options={"maxiter": 200, "xatol": 1e-10, "fatol": 1e-14})
        best = min(best, float(res.fun))
    return best / u_norm


@dataclass(frozen=True)
class StabilityRecord:
    deficit: float
    distance: float
    sample_id: int
    perturbation_kind: str
    scale: float = 0.0
    direction_index: int = 0


@dataclass(frozen=True)
class SampleSpec:
    kinds: tuple = ("transverse",)
    scales: tuple = tuple(np.geomspace(1e-3, 1e-2, 8))
    count: int = 4
    seed: int = 0


@dataclass(frozen=True)
class SampleBatch:
    records: tuple
    n_skipped: int


N_TRANSVERSE_MODES = 6


def _kernel_directions(fam: MinimizerFamily, count: int, rng) -> list[np.ndarray]:
    split = fam.split
    if split is None or split.kernel_dim == 0:
        raise ValueError("kernel sampling needs a nontrivial kernel")
    ops = fam.v.ops
    dirs = [split.K_basis[:, 0]]
    for _ in range(count - 1):
        coeff = rng.standard_normal(split.kernel_dim)
        dirs.append(split.K_basis @ coeff)
    # Sobolev-normalized so every direction sweeps the same distance ladder
    return [d / ops.w12_norm(d) for d in dirs]


def _transverse_directions(fam: MinimizerFamily, count: int, rng) -> list[np.ndarray]:
    spec = fam.spectrum
    if spec is None:
        raise ValueError("transverse sampling needs a computed spectrum")
    kd = fam.kernel_dim
    cols = spec.eigenvectors[:, kd: kd + N_TRANSVERSE_MODES]
    if cols.shape[1] == 0:
        raise ValueError("spectrum holds no modes beyond the kernel")
    ops = fam.v.ops
    dirs = [cols[:, 0]]
    for _ in range(count - 1):
        coeff = rng.standard_normal(cols.shape[1])
        dirs.append(cols @ coeff)
    return [d / ops.w12_norm(d) for d in dirs]


def sample_deficit_distance(fam: MinimizerFamily, spec: SampleSpec) -> SampleBatch:
    """Deterministic batch of perturbed states with deficits and distances.

    Kernel samples ride the flat directions of the second variation, the
    expensive case of the stability bound; transverse samples probe its
    coercive part; mixed samples combine one of each.  Each perturbed state
    is clipped nonnegative and renormalized.  Samples leaving the locality
    ball of radius delta around the base minimizer are skipped and counted,
    never silently kept.
    """
    rng = np.random.default_rng(spec.seed)
    ops = fam.v.ops
    records = []
    n_skipped = 0
    sample_id = 0
    for kind in spec.kinds:
        if kind == "kernel":
            dirs = _kernel_directions(fam, spec.count, rng)
        elif kind == "transverse":
            dirs = _transverse_directions(fam, spec.count, rng)
        elif kind == "mixed":
            kdirs = _kernel_directions(fam, spec.count, rng)
            tdirs = _transverse_directions(fam, spec.count, rng)
            dirs = []
            for kd_, td_ in zip(kdirs, tdirs):
                z = kd_ + td_
                dirs.append(z / ops.w12_norm(z))
        else:
            raise ValueError(f"unknown perturbation kind {kind!r}")
        for d_idx, direction in enumerate(dirs):
            for scale in spec.scales:
                u = energy.normalize(ops, np.clip(fam.v.u + scale * direction, 0.0, None))
                if ops.w12_norm(u.u - fam.v.u) > fam.delta:
                    n_skipped += 1
                    sample_id += 1
                    continue
                deficit = energy.energy_deficit(fam.v, u.u - fam.v.u)
                dist = distance_to_minimizers(u, fam)
                records.append(StabilityRecord(
                    deficit=deficit, distance=dist, sample_id=sample_id,
                    perturbation_kind=kind, scale=float(scale),
                    direction_index=d_idx))
                sample_id += 1
    return SampleBatch(records=tuple(records), n_skipped=n_skipped)


@dataclass(frozen=True)
class StabilityFit:
    exponent: float
    c_lower: float
    r2: float
    window: tuple
    n_records: int
    n_below_floor: int
    hull_size: int


def _binned_minima(x: np.ndarray, y: np.ndarray, nbins: int | None = None) -> np.ndarray:
    """Indices of the per-bin lowest points over a uniform partition of x.

    Pre-filtering the scatter this way keeps the hull from pivoting on
    extreme-abscissa points of non-binding sample directions.
    """
    if nbins is None:
        nbins = max(6, min(12, x.size // 3))
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo:
        return np.arange(x.size)
    edges = np.linspace(lo, hi, nbins + 1)
    which = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, nbins - 1)
    out = []
    for b in range(nbins):
        members = np.nonzero(which == b)[0]
        if members.size:
            out.append(members[np.argmin(y[members])])
    return np.array(sorted(out))


def _lower_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull, keeping collinear points."""
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    keep = []
    for i in range(xs.size):  # drop duplicate abscissae, keep the lowest point
        if keep and abs(xs[i] - xs[keep[-1]]) < 1e-12 * max(1.0, abs(xs[i])):
            continue
        keep.append(i)
    tol = 1e-9 * (np.ptp(xs) + 1.0) * (np.ptp(ys) + 1.0)
    hull: list[int] = []
    for i in keep:
        while len(hull) >= 2:
            ox, oy = xs[hull[-2]], ys[hull[-2]]
            ax, ay = xs[hull[-1]], ys[hull[-1]]
            if (ax - ox) * (ys[i] - oy) - (ay - oy) * (xs[i] - ox) < -tol:
                hull.pop()
            else:
                break
        hull.append(i)
    return order[np.array(hull)]


def fit_stability_exponent(records) -> StabilityFit:
    """Envelope fit of deficit against distance in log-log coordinates.

    The stability statement is a lower bound, so the binding constant lives
    on the lower envelope of the scatter: the fit runs over the lower convex
    hull, and the reported constant is the minimum of deficit/distance^beta
    over every kept record.
    """
    records = list(records)
    usable = [r for r in records if r.distance > 0 and r.deficit > NOISE_FLOOR]
    n_below = sum(1 for r in records if r.distance > 0 and r.deficit <= NOISE_FLOOR)
    if len(usable) < 8:
        raise InsufficientDataError(f"need >= 8 usable records, have {len(usable)}")
    d = np.array([r.distance for r in usable])
    y = np.array([r.deficit for r in usable])
    if d.max() < 9.5 * d.min():  # a decade, with slack for normalization drift
        raise InsufficientDataError("records span less than one decade of distance")

    log_d, log_y = np.log(d), np.log(y)
    env = _binned_minima(log_d, log_y)
    hull = env[_lower_hull(log_d[env], log_y[env])]
    hx, hy = log_d[hull], log_y[hull]
    slope, intercept = np.polyfit(hx, hy, 1)
    resid = hy - (slope * hx + intercept)
    total = hy - np.mean(hy)
    denom = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / denom if denom > 0 else 1.0
    if r2 < 0.99:
        raise FitRejectedError(f"envelope fit r2 = {r2:.5f} < 0.99")
    c_lower = float(np.min(y / d**slope))
    return StabilityFit(exponent=float(slope), c_lower=c_lower, r2=float(r2),
                        window=(float(d.min()), float(d.max())),
                        n_records=len(usable), n_below_floor=n_below,
                        hull_size=int(hull.size))


@dataclass(frozen=True)
class CoercivityData:
    """Conversion between the mass-normalized spectral gap and the envelope.

    lambda1_m is the spectral gap against the mass form; lambda1_w the same
    Hessian minimized against the Sobolev form on the kernel complement.  For
    small transverse perturbations the deficit/distance^2 ratio approaches
    floor = lambda1_w |v|_W^2 / 2, reported alongside the factor that turns
    (lambda1_m / 4) into that floor.
    """

    lambda1_m: float
    lambda1_w: float
    v_norm_sq: float
    conversion: float
    floor: float


def coercivity_data(v: energy.NormalizedState, split: KernelSplit) -> CoercivityData:
    ops = v.ops
    covs = [energy.volume_covector(v)]
    for j in range(split.kernel_dim):
        covs.append(ops.vol_weights * split.K_basis[:, j])
    B = mass_scaled_complement(ops, covs)
    H_red = B.T @ energy.hessian_form(v) @ B
    gram_red = B.T @ ops.w12_gram @ B
    lam_w = float(sla.eigh(0.5 * (H_red + H_red.T), 0.5 * (gram_red + gram_red.T),
                           eigvals_only=True, subset_by_index=(0, 0))[0])
    vnsq = float(v.u @ ops.w12_gram @ v.u)
    lam_m = split.lambda1
    conversion = 2.0 * vnsq * lam_w / lam_m
    return CoercivityData(lambda1_m=lam_m, lambda1_w=lam_w, v_norm_sq=vnsq,
                          conversion=conversion, floor=0.5 * lam_w * vnsq)
