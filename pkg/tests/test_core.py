"""Grid/transform layer: conventions pinned by closed-form Gaussian pairs."""

import numpy as np
import pytest

from gaborprop import core
from gaborprop.conventions import matched_lattice_steps


@pytest.fixture
def grid():
    return core.make_grid(16.0, 512)


def gaussian_field(grid, tau=1.0, x0=0.0, xi0=0.0):
    x = grid.x
    vals = np.exp(-np.pi * ((x - x0) / tau) ** 2) * np.exp(1j * xi0 * x)
    return core.Field(grid, vals)


def test_grid_validation():
    with pytest.raises(ValueError):
        core.make_grid(-1.0, 256)
    with pytest.raises(ValueError):
        core.make_grid(8.0, 300)  # not a power of two
    g = core.make_grid(16.0, 512)
    assert g.h == pytest.approx(16.0 / 512)
    assert g.x[0] == pytest.approx(-8.0)
    assert g.xi[0] == pytest.approx(-np.pi / g.h)
    # dual of dual is the original grid
    assert g.dual().dual() == g


def test_fourier_gaussian_closed_form(grid):
    # F[e^{-pi x^2}](xi) = e^{-xi^2 / (4 pi)} under the ledger convention
    f = gaussian_field(grid)
    F = core.fourier(f)
    expected = np.exp(-F.grid.x ** 2 / (4.0 * np.pi))
    assert np.max(np.abs(F.values - expected)) < 1e-12


def test_fourier_round_trip_and_parseval(grid):
    rng = np.random.default_rng(7)
    # band-limited random field, concentrated away from the fold
    f = gaussian_field(grid, tau=2.0)
    f.values *= rng.standard_normal(grid.n) * 0 + 1  # keep deterministic shape
    f = core.Field(grid, f.values * (1 + 0.3j))
    back = core.inverse_fourier(core.fourier(f))
    assert np.max(np.abs(back.values - f.values)) < 1e-12
    # ||f||^2 = (2 pi)^{-1} ||Ff||^2
    F = core.fourier(f)
    lhs = core.norm(f) ** 2
    rhs = core.norm(F) ** 2 / (2.0 * np.pi)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_fourier_shift_theorem(grid):
    f = gaussian_field(grid, tau=1.5)
    a = 0.7323  # deliberately off-grid
    F_shifted = core.fourier(core.translate(f, a))
    F = core.fourier(f)
    expected = F.values * np.exp(-1j * a * F.grid.x)
    assert np.max(np.abs(F_shifted.values - expected)) < 1e-10


def test_translate_grid_and_spectral_agree(grid):
    f = gaussian_field(grid, tau=1.5)
    a = 5 * grid.h
    tg = core.translate(f, a)              # roll path
    # force the spectral path with a shift a(1 + eps) that is not a multiple
    ts = core.translate(core.translate(f, a / 2 + grid.h / 3), a / 2 - grid.h / 3)
    assert np.max(np.abs(tg.values - ts.values)) < 1e-10
    # translation moves the peak where it should
    assert abs(grid.x[np.argmax(np.abs(tg.values))] - a) <= grid.h


def test_time_freq_shift_definition(grid):
    # pi(z) f (y) = e^{i w (y - x)} f(y - x), checked sample-wise on a grid shift
    f = gaussian_field(grid, tau=1.2)
    x0, w0 = 8 * grid.h, 2.1
    shifted = core.time_freq_shift(f, (x0, w0))
    y = grid.x
    direct = np.exp(1j * w0 * (y - x0)) * np.roll(f.values, 8)
    assert np.max(np.abs(shifted.values - direct)) < 1e-10


def test_tf_shift_composition_modulus(grid):
    # |pi(z) pi(z') f| = |pi(z + z') f| (phases may differ)
    f = gaussian_field(grid)
    z1, z2 = (0.31, 1.7), (-0.52, 0.9)
    a = core.time_freq_shift(core.time_freq_shift(f, z2), z1)
    b = core.time_freq_shift(f, (z1[0] + z2[0], z1[1] + z2[1]))
    assert np.max(np.abs(np.abs(a.values) - np.abs(b.values))) < 1e-9
    # and the norm is preserved
    assert core.norm(a) == pytest.approx(core.norm(f), rel=1e-12)


def test_batched_tf_shift_matches_single(grid):
    f = gaussian_field(grid, tau=0.9)
    xs = np.array([0.3, -1.27, 2.0])
    ws = np.array([1.1, -0.4, 3.3])
    rows = core.tf_shift_values(f.values, grid, xs, ws)
    for i in range(3):
        single = core.time_freq_shift(f, (xs[i], ws[i]))
        assert np.max(np.abs(rows[i] - single.values)) < 1e-10


def test_gaussian_window_normalization(grid):
    w = core.gaussian_window(grid)
    assert core.norm(w.field) == pytest.approx(1.0, abs=1e-12)
    # raw discrete L2 norm of e^{-pi x^2} is 2^{-1/4}
    raw = core.gaussian_window(grid, normalize=False)
    assert core.norm(raw.field) == pytest.approx(2.0 ** -0.25, rel=1e-10)
    # peak of the normalized window is 2^{1/4}
    assert np.max(w.values.real) == pytest.approx(2.0 ** 0.25, rel=1e-10)


def test_window_halfwidths():
    g = core.make_grid(16.0, 512)
    w = core.gaussian_window(g, tau=2.0)
    bh = w.band_halfwidth(1e-8)
    xh = w.space_halfwidth(1e-8)
    # definitions: spectrum e^{-tau^2 xi^2/(4 pi)}, window e^{-pi x^2/tau^2}
    assert np.exp(-(2.0 ** 2) * bh ** 2 / (4 * np.pi)) == pytest.approx(1e-8, rel=1e-6)
    assert np.exp(-np.pi * xh ** 2 / 2.0 ** 2) == pytest.approx(1e-8, rel=1e-6)


def test_weights():
    v2 = core.polynomial_weight(2.0)
    z = np.array([[0.0, 0.0], [3.0, 4.0]])
    vals = core.weight_eval(v2, z)
    assert vals[0] == pytest.approx(1.0)
    assert vals[1] == pytest.approx(26.0)  # 1 + 25
    # v-moderate: v_r(z + w) <= 2^{r/2} v_r(z) v_r(w), sampled
    rng = np.random.default_rng(3)
    a = rng.normal(size=(200, 2)) * 3
    b = rng.normal(size=(200, 2)) * 3
    lhs = core.weight_eval(v2, a + b)
    rhs = 2.0 * core.weight_eval(v2, a) * core.weight_eval(v2, b)
    assert np.all(lhs <= rhs + 1e-12)


def test_edge_mass(grid):
    ok = gaussian_field(grid, tau=1.0)
    bad = gaussian_field(grid, tau=1.0, x0=7.5)
    assert core.edge_mass(ok) < 1e-12
    assert core.edge_mass(bad) > 1e-3


def test_field_text_round_trip(grid):
    f = gaussian_field(grid, tau=1.3, xi0=2.0)
    text = core.field_to_text(f)
    assert text.startswith("# L=16 n=512")
    g = core.field_from_text(text)
    assert g.grid == f.grid
    assert np.max(np.abs(g.values - f.values)) == 0.0


def test_field_json_round_trip(grid):
    f = gaussian_field(grid, tau=0.8, x0=1.0)
    g = core.field_from_json_text(core.field_to_json_text(f))
    assert g.grid == f.grid
    assert np.max(np.abs(g.values - f.values)) == 0.0


def test_field_text_rejects_garbage():
    with pytest.raises(ValueError):
        core.field_from_text("1 2 3\n")
    with pytest.raises(ValueError):
        core.field_from_text("# L=8 n=256\n0 0 0\n")  # wrong row count


def test_matched_lattice_steps():
    a, b = matched_lattice_steps(np.pi / 2)
    assert a * b == pytest.approx(np.pi / 2, rel=1e-12)
    assert a == pytest.approx(0.5, rel=1e-12)
    assert b == pytest.approx(np.pi, rel=1e-12)
    with pytest.raises(ValueError):
        matched_lattice_steps(7.0)  # >= 2 pi
