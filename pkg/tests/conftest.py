import math

import numpy as np
import pytest

from yamstab import disc, energy, minimize, model, spectrum

BIF_RADIUS = 1.0 / math.sqrt(3.0)      # kernel appears at the first circle mode
SUB_RADIUS = 0.8 / math.sqrt(3.0)      # strictly below: nondegenerate constant


def frank_mode_eigenvalue(d: int, r: float, k: int) -> float:
    """Separation-of-variables eigenvalue of the second variation at the
    constant on the circle x half-sphere product: 2((k/r)^2 - (d-2))."""
    return 2.0 * ((k / r) ** 2 - (d - 2))


def random_positive_state(ops, seed: int, amp: float = 0.3) -> energy.NormalizedState:
    """Seeded smooth positive state, bounded away from zero."""
    rng = np.random.default_rng(seed)
    t = ops.grid.nodes
    T = ops.model.length
    pert = np.zeros_like(t)
    for k in range(1, 6):
        if ops.model.topology == "circle":
            pert += rng.standard_normal() * np.cos(2 * math.pi * k * t / T) / k
            pert += rng.standard_normal() * np.sin(2 * math.pi * k * t / T) / k
        else:
            pert += rng.standard_normal() * np.cos(math.pi * k * t / T) / k
    pert /= max(1.0, np.max(np.abs(pert)))
    return energy.normalize(ops, 1.0 + amp * pert)


def richardson_first(f, h: float) -> float:
    """Richardson-extrapolated centered first difference of f at 0."""
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    d4 = (f(h / 4) - f(-h / 4)) / (h / 2)
    r1 = (4 * d2 - d1) / 3
    r2 = (4 * d4 - d2) / 3
    return (16 * r2 - r1) / 15


def richardson_second(f, h: float) -> float:
    """Richardson-extrapolated centered second difference of f at 0."""
    f0 = f(0.0)
    d1 = (f(h) - 2 * f0 + f(-h)) / h**2
    d2 = (f(h / 2) - 2 * f0 + f(-h / 2)) / (h / 2) ** 2
    return (4 * d2 - d1) / 3


def _pipeline(r: float, N: int, seed: int = 2):
    m = model.frank_product(5, r)
    rep = minimize.estimate_yamabe_constant(
        m, N, starts=3, opts=minimize.MinimizeOptions(seed=seed))
    spec = spectrum.eigen_decompose(rep.v, 12)
    split = spectrum.kernel_split(spec)
    return m, rep, spec, split


@pytest.fixture(scope="session")
def frank_nondeg():
    return _pipeline(SUB_RADIUS, 256)


@pytest.fixture(scope="session")
def frank_deg():
    return _pipeline(BIF_RADIUS, 256)


@pytest.fixture(scope="session")
def frank_deg_chart(frank_deg):
    from yamstab import lsred
    _, rep, _, split = frank_deg
    return lsred.ReductionChart(v=rep.v, split=split, ops=rep.v.ops)


@pytest.fixture(scope="session")
def hemisphere3():
    m = model.hemisphere(3)
    g = disc.build_grid(m, 128)
    return m, g, disc.assemble_operators(m, g)


@pytest.fixture(scope="session")
def ball3():
    m = model.ball(3)
    g = disc.build_grid(m, 128)
    return m, g, disc.assemble_operators(m, g)


@pytest.fixture(scope="session")
def cylinder3():
    m = model.cylinder(3, 1.0)
    g = disc.build_grid(m, 96)
    return m, g, disc.assemble_operators(m, g)
