"""Nonlinearity table invariants, then the Duhamel iteration against the
coupled split-step oracle and the structural identities (gauge, mass,
linear reduction) that pin the sign and quadrature conventions.
"""

import numpy as np
import pytest

from gaborprop import core, nonlinear, parametrix, reference, weyl


@pytest.fixture(scope="module")
def grid():
    return core.make_grid(32.0, 512)


@pytest.fixture(scope="module")
def u0(grid):
    win = core.gaussian_window(grid)
    return core.Field(grid, 0.5 * core.time_freq_shift(win.field, (0.0, 0.5)).values)


@pytest.fixture(scope="module")
def free_model():
    return weyl.SymbolModel([weyl.QuadraticPoly(cxixi=1.0)])


@pytest.fixture(scope="module")
def cubic():
    return nonlinear.AnalyticNonlinearity.cubic(1.0)


@pytest.fixture(scope="module")
def cubic_run(u0, free_model, grid, cubic):
    cfg = reference.SplitStepConfig.from_symbol(free_model, grid, 0.1, 64)
    sol = nonlinear.duhamel_picard(u0, cubic, cfg, 0.1, tol=1e-10)
    return cfg, sol


# ---------------------------------------------------------------------------
# Coefficient table


def test_constant_term_is_rejected():
    with pytest.raises(ValueError):
        nonlinear.AnalyticNonlinearity({(0, 0): 1.0})


def test_total_degree_is_capped():
    with pytest.raises(ValueError):
        nonlinear.AnalyticNonlinearity({(5, 5): 1.0})
    with pytest.raises(ValueError):
        nonlinear.AnalyticNonlinearity({(-1, 2): 1.0})


def test_zero_coefficients_are_dropped():
    F = nonlinear.AnalyticNonlinearity({(2, 1): 1.0, (3, 0): 0.0, (0, 0): 0.0})
    assert F.table == {(2, 1): 1.0}
    assert F.degree == 3


def test_cubic_arithmetic(grid, cubic):
    probe = core.Field(grid, np.full(grid.n, 1.0 + 1.0j))
    got = nonlinear.apply_F(cubic, probe)
    assert np.max(np.abs(got.values - (2.0 + 2.0j))) < 1e-14


def test_shipped_nonlinearities_vanish_at_zero(grid, cubic):
    zero = core.Field(grid, np.zeros(grid.n, dtype=np.complex128))
    mixed = nonlinear.AnalyticNonlinearity({(2, 1): 0.3, (1, 2): -0.1j, (3, 2): 2.0})
    for F in (cubic, mixed):
        assert np.max(np.abs(nonlinear.apply_F(F, zero).values)) == 0.0


def test_modulation_norm_is_an_algebra(grid):
    # measured 0.069 on this corpus; any finite constant certifies the
    # series maps a small ball into itself
    c_alg = nonlinear.algebra_constant(grid, npairs=20, seed=7)
    assert 0.0 < c_alg < 1.0


# ---------------------------------------------------------------------------
# Duhamel iteration, split-step linear lane


def test_zero_nonlinearity_reduces_to_linear(u0, free_model, grid):
    cfg = reference.SplitStepConfig.from_symbol(free_model, grid, 0.1, 64)
    F0 = nonlinear.AnalyticNonlinearity({})
    sol = nonlinear.duhamel_picard(u0, F0, cfg, 0.1, tol=1e-12)
    assert sol.iterations == 1
    lin = reference.split_step(u0, cfg)
    assert np.max(np.abs(sol.fields[-1].values - lin.values)) == 0.0


def test_cubic_small_data_contracts_fast(cubic_run):
    _, sol = cubic_run
    assert sol.iterations <= 10
    assert np.max(sol.ratios) < 0.1  # measured peak 0.021
    assert sol.residual < 1e-10  # measured 7.6e-14


def test_cubic_matches_coupled_split_step(cubic_run, u0, free_model, grid):
    _, sol = cubic_run
    fine = reference.SplitStepConfig.from_symbol(free_model, grid, 0.1, 4096)
    oracle = reference.split_step(u0, fine, coupling=1.0)
    err = core.norm(core.Field(grid, sol.fields[-1].values - oracle.values))
    assert err / core.norm(oracle) < 1e-4  # measured 1.3e-5


def test_cubic_conserves_mass(cubic_run, u0):
    _, sol = cubic_run
    assert abs(core.norm(sol.fields[-1]) - core.norm(u0)) < 1e-5


def test_gauge_phase_rides_through(cubic_run, u0, cubic):
    cfg, sol = cubic_run
    theta = 0.73
    spun = core.Field(u0.grid, np.exp(1j * theta) * u0.values)
    spun_sol = nonlinear.duhamel_picard(spun, cubic, cfg, 0.1, tol=1e-10)
    dev = max(
        np.max(np.abs(a.values - np.exp(1j * theta) * b.values))
        for a, b in zip(spun_sol.fields, sol.fields)
    )
    assert dev < 1e-8


def test_doubling_the_state_raises_the_ratio(cubic_run, u0, cubic):
    cfg, sol = cubic_run
    doubled = core.Field(u0.grid, 2.0 * u0.values)
    sol2 = nonlinear.duhamel_picard(doubled, cubic, cfg, 0.1, tol=1e-10)
    assert sol2.ratios[0] > sol.ratios[0]  # measured 0.052 vs 0.013


# ---------------------------------------------------------------------------
# Duhamel iteration, parametrix linear lane


def test_parametrix_plan_drives_the_same_fixed_point(cubic):
    grid = core.make_grid(48.0, 1024)
    win = core.gaussian_window(grid)
    u0 = core.Field(grid, 0.5 * core.time_freq_shift(win.field, (0.0, 0.5)).values)
    model = weyl.SymbolModel([weyl.QuadraticPoly(cxixi=1.0)])
    # the cubed atom is a bit wider in frequency than the atom itself,
    # so the analysis loss allowance must follow
    plan = parametrix.build_plan(model, grid, T=0.1, nsteps=4, trunc_tol=1e-5)
    sol = nonlinear.duhamel_picard(u0, cubic, plan, 0.1, tol=1e-6)
    assert sol.residual < 1e-6  # measured 3.5e-8
    fine = reference.SplitStepConfig.from_symbol(model, grid, 0.1, 4096)
    oracle = reference.split_step(u0, fine, coupling=1.0)
    err = core.norm(core.Field(grid, sol.fields[-1].values - oracle.values))
    assert err / core.norm(oracle) < 5e-3  # measured 1.0e-3


# ---------------------------------------------------------------------------
# Divergence handling and the horizon search


def test_large_state_on_long_horizon_is_refused(u0, free_model, grid, cubic):
    big = core.Field(grid, 6.0 * u0.values)
    cfg = reference.SplitStepConfig.from_symbol(free_model, grid, 0.4, 32)
    with pytest.raises(nonlinear.NonlinearError, match="shrink T0 or u0"):
        nonlinear.duhamel_picard(big, cubic, cfg, 0.4, tol=1e-8, nsteps=8)


def test_bisection_finds_a_contracting_horizon(u0, free_model, grid, cubic):
    big = core.Field(grid, 6.0 * u0.values)

    def make(h):
        return reference.SplitStepConfig.from_symbol(free_model, grid, h, 32)

    h, sol = nonlinear.bisect_horizon(big, cubic, make, 0.4, tol=1e-8, nsteps=8)
    assert 0.04 <= h < 0.4  # measured 0.15
    assert np.max(sol.ratios) <= 0.9


def test_propagator_validation(u0, free_model, grid, cubic):
    cfg = reference.SplitStepConfig.from_symbol(free_model, grid, 0.2, 32)
    with pytest.raises(ValueError):
        nonlinear.duhamel_picard(u0, cubic, cfg, 0.1, nsteps=8)  # horizon
    with pytest.raises(ValueError):
        nonlinear.duhamel_picard(u0, cubic, cfg, 0.2, nsteps=7)  # divisibility
    wobbly = reference.SplitStepConfig(
        grid=grid,
        sigma=cfg.sigma,
        potential=np.zeros((32, grid.n)),
        dt=cfg.dt,
        steps=32,
    )
    with pytest.raises(ValueError):
        nonlinear.duhamel_picard(u0, cubic, wobbly, 0.2, nsteps=8)
    with pytest.raises(TypeError):
        nonlinear.duhamel_picard(u0, cubic, object(), 0.1)
