"""Weyl quantization on the grid.

Symbols are sums of tagged parts: polynomial (degree <= 2), Fourier
multipliers sigma(xi), potentials V(x), and generic sampled a(x, xi).
Structured parts apply spectrally or pointwise (exact up to FFT roundoff);
sampled parts go through the kernel

    K(x, y) = (2 pi)^{-1} INT e^{i(x-y) xi} a((x+y)/2, xi) dxi

assembled with one inverse FFT per anti-diagonal. The constant is the
ledger's (2 pi)^{-d}, so the symbol 1 quantizes to the identity.

Batching note: everything that maps over lattice atoms (gabor_matrix,
apply_to_rows) does so as one vectorized block per part rather than a
worker pool; results are deterministic and order-independent.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import CubicSpline

from . import core, tfa
from .conventions import WEYL_CONST

_REALITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# Symbol parts


@dataclass
class QuadraticPoly:
    """c1 + cx x + cxi xi + cxx x^2 + cxxi x xi + cxixi xi^2."""

    c1: float = 0.0
    cx: float = 0.0
    cxi: float = 0.0
    cxx: float = 0.0
    cxxi: float = 0.0
    cxixi: float = 0.0
    tag: int = 2

    def eval(self, x, xi):
        return (
            self.c1
            + self.cx * x
            + self.cxi * xi
            + self.cxx * x**2
            + self.cxxi * x * xi
            + self.cxixi * xi**2
        )

    def grad(self, x, xi):
        gx = self.cx + 2.0 * self.cxx * x + self.cxxi * xi
        gxi = self.cxi + self.cxxi * x + 2.0 * self.cxixi * xi
        return gx, gxi

    def shifted(self, z):
        """The polynomial a(. + z), expanded."""
        x0, w0 = float(z[0]), float(z[1])
        return QuadraticPoly(
            c1=self.eval(x0, w0),
            cx=self.cx + 2.0 * self.cxx * x0 + self.cxxi * w0,
            cxi=self.cxi + self.cxxi * x0 + 2.0 * self.cxixi * w0,
            cxx=self.cxx,
            cxxi=self.cxxi,
            cxixi=self.cxixi,
            tag=self.tag,
        )

    def pure_quadratic(self):
        return QuadraticPoly(cxx=self.cxx, cxxi=self.cxxi, cxixi=self.cxixi,
                             tag=self.tag)

    def _data(self):
        return np.array([self.c1, self.cx, self.cxi, self.cxx, self.cxxi,
                         self.cxixi])


@dataclass
class Multiplier:
    """sigma(xi) sampled on the dual grid (monotone xi order)."""

    grid: core.SpatialGrid
    samples: np.ndarray
    tag: int = 2
    _spline: object = dc_field(default=None, repr=False, compare=False)

    @classmethod
    def from_callable(cls, grid, fn, tag=2):
        return cls(grid=grid, samples=np.asarray(fn(grid.dual().x)), tag=tag)

    def eval_xi(self, xi):
        if self._spline is None:
            self._spline = CubicSpline(self.grid.dual().x, self.samples)
        return self._spline(xi)

    def dsigma(self, xi):
        if self._spline is None:
            self.eval_xi(0.0)
        return self._spline(xi, 1)

    def shifted(self, z):
        """sigma(. + xi0): spectral translate of the samples."""
        dual = self.grid.dual()
        f = core.Field(dual, np.asarray(self.samples, dtype=np.complex128))
        moved = core.translate(f, -float(z[1]))
        vals = moved.values.real if np.isrealobj(self.samples) else moved.values
        return Multiplier(grid=self.grid, samples=vals, tag=self.tag)


@dataclass
class Potential:
    """V(x) sampled on the spatial grid."""

    grid: core.SpatialGrid
    samples: np.ndarray
    tag: int = 0
    _spline: object = dc_field(default=None, repr=False, compare=False)

    @classmethod
    def from_callable(cls, grid, fn, tag=0):
        return cls(grid=grid, samples=np.asarray(fn(grid.x)), tag=tag)

    def eval_x(self, x):
        if self._spline is None:
            self._spline = CubicSpline(self.grid.x, self.samples)
        return self._spline(x)

    def dv(self, x):
        if self._spline is None:
            self.eval_x(0.0)
        return self._spline(x, 1)

    def shifted(self, z):
        f = core.Field(self.grid, np.asarray(self.samples, dtype=np.complex128))
        moved = core.translate(f, -float(z[0]))
        vals = moved.values.real if np.isrealobj(self.samples) else moved.values
        return Potential(grid=self.grid, samples=vals, tag=self.tag)


@dataclass
class SampledSymbol:
    """a(x, xi) sampled on grid x dual-grid; quantized via the kernel path.

    The samples define the model (their trig interpolant in x); set
    check_seam=False when a seam jump in x is intentional.
    """

    grid: core.SpatialGrid
    samples: np.ndarray
    tag: int = 0
    check_seam: bool = True
    _kernel: object = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = self.grid.n
        if self.samples.shape != (n, n):
            raise ValueError(f"sampled symbol must be ({n}, {n})")

    def kernel(self):
        if self._kernel is None:
            self._kernel = sampled_kernel(self.samples, self.grid,
                                          check_seam=self.check_seam)
        return self._kernel


def _part_data(part):
    if isinstance(part, QuadraticPoly):
        return part._data()
    return np.asarray(part.samples)


@dataclass
class SymbolModel:
    """A symbol as a list of tagged parts; tags mark a2/a1/a0 membership."""

    parts: list

    def __post_init__(self):
        for p in self.parts:
            if p.tag not in (0, 1, 2):
                raise ValueError(f"homogeneity tag must be 0, 1 or 2, got {p.tag}")
            if p.tag in (1, 2):
                data = _part_data(p)
                if np.max(np.abs(np.imag(data))) > _REALITY_TOL:
                    raise ValueError("a2/a1 parts must be real-valued")

    def at(self, t):
        return self

    def flow_parts(self):
        """The a2 + a1 parts: everything that drives the classical flow."""
        return [p for p in self.parts if p.tag in (1, 2)]

    def zero_order_parts(self):
        return [p for p in self.parts if p.tag == 0]


@dataclass
class TimeSymbol:
    """Piecewise-linear-in-t symbol: knots (t_k, SymbolModel), matching parts."""

    knots: list

    def __post_init__(self):
        ts = [t for t, _ in self.knots]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise ValueError("time samples must be strictly increasing")
        shapes = [[type(p) for p in m.parts] for _, m in self.knots]
        if any(s != shapes[0] for s in shapes):
            raise ValueError("all time samples must share the part structure")

    def at(self, t):
        ts = [tk for tk, _ in self.knots]
        if t <= ts[0]:
            return self.knots[0][1]
        if t >= ts[-1]:
            return self.knots[-1][1]
        i = int(np.searchsorted(ts, t) - 1)
        s = (t - ts[i]) / (ts[i + 1] - ts[i])
        blended = [
            _blend_parts(p0, p1, s)
            for p0, p1 in zip(self.knots[i][1].parts, self.knots[i + 1][1].parts)
        ]
        return SymbolModel(parts=blended)


def _blend_parts(p0, p1, s):
    if isinstance(p0, QuadraticPoly):
        d = (1 - s) * p0._data() + s * p1._data()
        return QuadraticPoly(*d, tag=p0.tag)
    cls = type(p0)
    return cls(grid=p0.grid, samples=(1 - s) * p0.samples + s * p1.samples,
               tag=p0.tag)


# ---------------------------------------------------------------------------
# Quantization


def sampled_kernel(samples, grid, check_seam=True):
    """Assemble K(x_i, y_j) for a sampled symbol.

    The symbol is upsampled x2 in x spectrally (midpoints live on the half
    grid), then one inverse FFT per anti-diagonal produces the kernel.
    The upsample is exact for the trig interpolant of the samples; what it
    cannot represent is a jump at the x seam (e.g. non-periodic polynomial
    growth), which rings globally. The seam check compares the wrap step
    against typical row-to-row steps and rejects clear discontinuities.
    """
    n = grid.n
    a = np.asarray(samples, dtype=np.complex128)
    if check_seam:
        jump = np.max(np.abs(a[0] - a[-1]))
        step = np.median(np.max(np.abs(np.diff(a, axis=0)), axis=1))
        if jump > 50.0 * (step + 1e-300):
            raise ValueError(
                f"symbol jumps at the x seam (wrap step {jump:.2e} vs typical "
                f"row step {step:.2e}); its x-dependence is not on the grid "
                "band. Pass check_seam=False if the jump is intentional."
            )
    X = np.fft.fft(a, axis=0)
    Y = np.zeros((2 * n, n), dtype=np.complex128)
    Y[: n // 2] = X[: n // 2]
    Y[n // 2] = 0.5 * X[n // 2]
    Y[3 * n // 2] = 0.5 * X[n // 2]
    Y[3 * n // 2 + 1 :] = X[n // 2 + 1 :]
    a_fine = 2.0 * np.fft.ifft(Y, axis=0)  # midpoints -L/2 + s h/2
    B = n * np.fft.ifft(a_fine, axis=1) * (grid.dxi * WEYL_CONST)
    B *= (-1.0) ** np.arange(n)[None, :]
    i = np.arange(n)
    return B[i[:, None] + i[None, :], (i[:, None] - i[None, :]) % n]


def _apply_quadratic(part, rows, grid):
    x = grid.x
    out = np.zeros_like(rows)
    if part.c1:
        out += part.c1 * rows
    if part.cx:
        out += part.cx * (x * rows)
    if part.cxx:
        out += part.cxx * (x**2 * rows)
    if part.cxi or part.cxixi or part.cxxi:
        xi = grid.dual().x
        spec = core._fourier_values(rows, grid)
        Df = core._inverse_fourier_values(spec * xi, grid)
        if part.cxi:
            out += part.cxi * Df
        if part.cxixi:
            out += part.cxixi * core._inverse_fourier_values(spec * xi**2, grid)
        if part.cxxi:
            Dxf = core._inverse_fourier_values(
                core._fourier_values(x * rows, grid) * xi, grid
            )
            out += part.cxxi * 0.5 * (x * Df + Dxf)
    return out


def apply_part_to_rows(part, rows, grid):
    """One symbol part applied to a batch of fields (rows of shape (m, n))."""
    if isinstance(part, QuadraticPoly):
        return _apply_quadratic(part, rows, grid)
    if isinstance(part, Multiplier):
        spec = core._fourier_values(rows, grid)
        return core._inverse_fourier_values(spec * part.samples, grid)
    if isinstance(part, Potential):
        return part.samples * rows
    if isinstance(part, SampledSymbol):
        return grid.h * (rows @ part.kernel().T)
    raise TypeError(f"unknown symbol part {type(part).__name__}")


def apply_to_rows(symbol, rows, grid):
    out = np.zeros_like(rows)
    for part in symbol.parts:
        out += apply_part_to_rows(part, rows, grid)
    return out


def weyl_apply(symbol, f):
    """a^w f for a SymbolModel (or a single part)."""
    parts = symbol.parts if hasattr(symbol, "parts") else [symbol]
    vals = f.values[None, :]
    out = np.zeros_like(vals)
    for part in parts:
        out += apply_part_to_rows(part, vals, f.grid)
    return core.Field(f.grid, out[0])


def symbol_samples(symbol, pgrid):
    """Evaluate the symbol on a phase grid (for envelopes and diagnostics)."""
    X, Xi = pgrid.mesh()
    out = np.zeros(pgrid.shape, dtype=np.complex128)
    for part in symbol.parts if hasattr(symbol, "parts") else [symbol]:
        if isinstance(part, QuadraticPoly):
            out += part.eval(X, Xi)
        elif isinstance(part, Multiplier):
            if pgrid.gxi.n == part.grid.n and np.allclose(
                pgrid.gxi.x, part.grid.dual().x
            ):
                out += np.asarray(part.samples)[None, :]
            else:
                out += part.eval_xi(Xi)
        elif isinstance(part, Potential):
            if pgrid.gx.n == part.grid.n and np.allclose(pgrid.gx.x, part.grid.x):
                out += np.asarray(part.samples)[:, None]
            else:
                spline = CubicSpline(part.grid.x, part.samples)
                out += spline(X)
        elif isinstance(part, SampledSymbol):
            if pgrid.shape != part.samples.shape:
                raise ValueError("sampled part does not match the phase grid")
            out += part.samples
        else:
            raise TypeError(f"unknown symbol part {type(part).__name__}")
    return out


# ---------------------------------------------------------------------------
# Commutator identities


def _derivative_symbol_xi(part, grid):
    """(D_xi a) = -i d/dxi a, as a quantizable part (times -i kept explicit)."""
    if isinstance(part, QuadraticPoly):
        # d/dxi: cxi + cxxi x + 2 cxixi xi
        return QuadraticPoly(c1=part.cxi, cx=part.cxxi, cxi=2.0 * part.cxixi,
                             tag=0)
    if isinstance(part, Multiplier):
        dual = grid.dual()
        d = CubicSpline(dual.x, part.samples)(dual.x, 1)
        return Multiplier(grid=grid, samples=d, tag=0)
    if isinstance(part, Potential):
        return QuadraticPoly(tag=0)  # zero
    raise TypeError("xi-derivative only for structured parts")


def _derivative_symbol_x(part, grid):
    if isinstance(part, QuadraticPoly):
        return QuadraticPoly(c1=part.cx, cx=2.0 * part.cxx, cxi=part.cxxi, tag=0)
    if isinstance(part, Potential):
        f = core.Field(grid, np.asarray(part.samples, dtype=np.complex128))
        spec = core.fourier(f)
        d = core.inverse_fourier(
            core.Field(spec.grid, 1j * spec.grid.x * spec.values)
        )
        return Potential(grid=grid, samples=d.values, tag=0)
    if isinstance(part, Multiplier):
        return QuadraticPoly(tag=0)
    raise TypeError("x-derivative only for structured parts")


def _times_x(part, grid):
    """x * a as a quantizable part (only where it stays structured)."""
    if isinstance(part, QuadraticPoly):
        if part.cxx or part.cxxi or part.cxixi:
            raise ValueError("x * a leaves degree 2; restrict to affine a")
        return QuadraticPoly(cx=part.c1, cxx=part.cx, cxxi=part.cxi, tag=0)
    if isinstance(part, Potential):
        return Potential(grid=grid, samples=grid.x * np.asarray(part.samples),
                         tag=0)
    raise ValueError("x * a not structured for this part")


def _times_xi(part, grid):
    if isinstance(part, QuadraticPoly):
        if part.cxx or part.cxxi or part.cxixi:
            raise ValueError("xi * a leaves degree 2; restrict to affine a")
        return QuadraticPoly(cxi=part.c1, cxxi=part.cx, cxixi=part.cxi, tag=0)
    if isinstance(part, Multiplier):
        return Multiplier(grid=grid, samples=grid.dual().x * np.asarray(part.samples),
                          tag=0)
    if isinstance(part, Potential):
        X, Xi = np.meshgrid(grid.x, grid.dual().x, indexing="ij")
        samples = np.asarray(part.samples)[:, None] * Xi
        return SampledSymbol(grid=grid, samples=samples, tag=0)
    raise ValueError("xi * a not structured for this part")


def _apply_scaled(part, f, scale):
    out = apply_part_to_rows(part, f.values[None, :], f.grid)[0]
    return scale * out


def commutator_check(symbol, f, which=(1, 2, 3)):
    """Residuals of the three Weyl commutation identities on f.

    1: [a^w, x] f = (D_xi a)^w f
    2: (x a)^w f  = a^w (x f) - 1/2 (D_xi a)^w f
    3: (xi a)^w f = 1/2 (D_x a)^w f + a^w (D_x f)

    Both sides are computed independently; identities 2 and 3 need x*a /
    xi*a to stay representable, so they raise for parts where the product
    leaves the structured classes. Residuals are relative to ||f|| and
    the applied-symbol scale.
    """
    grid = f.grid
    parts = symbol.parts if hasattr(symbol, "parts") else [symbol]
    af = core.Field(grid, apply_to_rows(SymbolModel(list(parts)), f.values[None, :],
                                        grid)[0])
    scale = max(core.norm(af), core.norm(f), 1e-300)
    xi = grid.dual().x
    spec = core._fourier_values(f.values[None, :], grid)
    Df = core.Field(grid, core._inverse_fourier_values(spec * xi, grid)[0])
    xf = core.Field(grid, grid.x * f.values)
    out = {}
    if 1 in which:
        a_xf = weyl_apply(SymbolModel(list(parts)), xf)
        lhs = a_xf.values - grid.x * af.values
        rhs = sum(
            _apply_scaled(_derivative_symbol_xi(p, grid), f, -1j) for p in parts
        )
        out["identity1"] = float(
            np.sqrt(grid.h) * np.linalg.norm(lhs - rhs) / scale
        )
    if 2 in which:
        lhs = sum(_apply_scaled(_times_x(p, grid), f, 1.0) for p in parts)
        a_xf = weyl_apply(SymbolModel(list(parts)), xf)
        rhs = a_xf.values - 0.5 * sum(
            _apply_scaled(_derivative_symbol_xi(p, grid), f, -1j) for p in parts
        )
        out["identity2"] = float(
            np.sqrt(grid.h) * np.linalg.norm(lhs - rhs) / scale
        )
    if 3 in which:
        lhs = sum(_apply_scaled(_times_xi(p, grid), f, 1.0) for p in parts)
        a_Df = weyl_apply(SymbolModel(list(parts)), Df)
        rhs = 0.5 * sum(
            _apply_scaled(_derivative_symbol_x(p, grid), f, -1j) for p in parts
        ) + a_Df.values
        out["identity3"] = float(
            np.sqrt(grid.h) * np.linalg.norm(lhs - rhs) / scale
        )
    out["max"] = max(out.values())
    return out


# ---------------------------------------------------------------------------
# Gabor matrices


def _cell_distance(lattice, nodes):
    """Chebyshev distance between node pairs, in lattice cell units.

    "Within r cells" means a block of +-r lattice steps in each
    direction, matching how the band of a matrix indexed by (j, k) is
    usually described.
    """
    dj = np.abs(nodes[:, None, 0] - nodes[None, :, 0]) / lattice.alpha
    dk = np.abs(nodes[:, None, 1] - nodes[None, :, 1]) / lattice.beta
    return np.maximum(dj, dk)


@dataclass
class GaborMatrix:
    """Banded Gabor matrix M(w, z) = <a^w pi(z) g, pi(w) g>.

    Entries are dense in memory but zeroed outside the cell block
    |w - z| <= radius (Chebyshev in index units); the column-mass
    invariant recorded at build time certifies the truncation.
    """

    lattice: tfa.PhaseLattice
    radius_cells: float
    entries: np.ndarray
    min_column_band_fraction: float

    def column_mass_outside(self, radius_cells):
        """Max over z of the column l1 fraction beyond the given radius."""
        far = _cell_distance(self.lattice, self.lattice.nodes()) > radius_cells
        mag = np.abs(self.entries)
        total = np.sum(mag, axis=0)
        outside = np.sum(np.where(far, mag, 0.0), axis=0)
        good = total > 1e-300
        return float(np.max(outside[good] / total[good]))

    def decay_profile(self, nbins=24):
        """(cell distance, max |M|) pairs for the log-decay plot."""
        dist = _cell_distance(self.lattice, self.lattice.nodes()).ravel()
        mag = np.abs(self.entries).ravel()
        keep = dist <= self.radius_cells
        dist, mag = dist[keep], mag[keep]
        edges = np.linspace(0.0, self.radius_cells, nbins + 1)
        prof = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            sel = (dist >= lo) & (dist < hi)
            if np.any(sel):
                prof.append((0.5 * (lo + hi), float(np.max(mag[sel]))))
        return prof

    def to_csv_triplets(self):
        lines = ["z_idx,w_idx,abs"]
        wi, zi = np.nonzero(np.abs(self.entries))
        for w, z in zip(wi, zi):
            lines.append(f"{z},{w},{abs(self.entries[w, z]):.12e}")
        return "\n".join(lines) + "\n"


def gabor_matrix(symbol, window, lattice, grid, radius_cells=8.0,
                 band_tol=1e-8):
    """Assemble the banded Gabor matrix of a^w over the lattice.

    Applies a^w to every atom in one batched pass and projects back onto
    the atoms. Raises if more than `band_tol` of any column's l1 mass
    falls outside the requested band.
    """
    if radius_cells < 4.0:
        raise ValueError("band radius below 4 cells loses the decay tail")
    nodes = lattice.nodes()
    A = tfa.atom_matrix(grid, window, nodes)
    images = apply_to_rows(symbol, A, grid)
    M = grid.h * (np.conj(A) @ images.T)  # [w, z]
    inside = _cell_distance(lattice, nodes) <= radius_cells
    mag = np.abs(M)
    total = np.sum(mag, axis=0)
    banded_mass = np.sum(np.where(inside, mag, 0.0), axis=0)
    good = total > 1e-300
    frac = float(np.min(banded_mass[good] / total[good]))
    if frac < 1.0 - band_tol:
        raise ValueError(
            f"band radius {radius_cells} keeps only {frac:.10f} of the worst "
            f"column mass (need >= {1 - band_tol})"
        )
    return GaborMatrix(
        lattice=lattice,
        radius_cells=radius_cells,
        entries=np.where(inside, M, 0.0),
        min_column_band_fraction=frac,
    )


def wigner_window(pgrid):
    """The phase-plane window with |M(w,z)| = (2pi)^{-1/2} |V_Phi a(...)|.

    Phi = W(g, g)/sqrt(2 pi) for the standard Gaussian g: a unit-norm
    tensor of dilated Gaussians with tau = 1/sqrt(2) in x and
    tau = pi sqrt(2) in xi.
    """
    wx = np.sqrt(2.0) * np.exp(-2.0 * np.pi * pgrid.gx.x**2)
    wxi = np.exp(-pgrid.gxi.x**2 / (2.0 * np.pi)) / np.sqrt(np.pi)
    return tfa.TensorWindow2(pgrid, wx.astype(np.complex128),
                             wxi.astype(np.complex128))


def symplectic_rotate(dz):
    """j(z1, z2) = (z2, -z1), the phase of Gabor-matrix decay arguments."""
    dz = np.asarray(dz, dtype=float)
    return np.stack([dz[..., 1], -dz[..., 0]], axis=-1)


def symbol_envelope(symbol, grid, z_stride=(4, 4), pgrid=None):
    """Dominating envelope of the symbol over the operator's phase grid."""
    pgrid = pgrid or tfa.PhaseGrid2(grid, grid.dual())
    samples = symbol_samples(symbol, pgrid)
    return tfa.sjostrand_envelope(samples, pgrid, wigner_window(pgrid),
                                  z_stride=z_stride)


# ---------------------------------------------------------------------------
# Position / momentum boundedness probe


def position_momentum_bound(p, q, weight, grid, nprobe=20, seed=0):
    """Measured bound of f -> x f and f -> D f between weighted norms.

    Ratios ||x f||_{M^{p,q}_m} / ||f||_{M^{p,q}_{v1 m}} (same for D) over
    a corpus of shifted atoms; zero fields are skipped. Returns the report
    dict with per-operator baselines and maxima.
    """
    v1 = core.polynomial_weight(1.0)
    if weight is None:
        vm = v1
    else:
        vm = core.Weight(name="v1*m", fn=lambda z: v1(z) * core.weight_eval(weight, z))
    g = core.gaussian_window(grid)
    rng = np.random.default_rng(seed)
    fields = [core.Field(grid, g.values.copy())]
    for _ in range(nprobe - 1):
        z = (rng.uniform(-6, 6), rng.uniform(-6, 6))
        fields.append(core.time_freq_shift(core.Field(grid, g.values.copy()), z))
    ratios_x, ratios_d = [], []
    for f in fields:
        denom = tfa.modulation_norm(f, p=p, q=q, weight=vm)
        if denom < 1e-300:
            continue
        xf = core.Field(grid, grid.x * f.values)
        spec = core._fourier_values(f.values[None, :], grid)
        Df = core.Field(
            grid, core._inverse_fourier_values(spec * grid.dual().x, grid)[0]
        )
        ratios_x.append(tfa.modulation_norm(xf, p=p, q=q, weight=weight) / denom)
        ratios_d.append(tfa.modulation_norm(Df, p=p, q=q, weight=weight) / denom)
    report = {
        "baseline_x": ratios_x[0],
        "baseline_d": ratios_d[0],
        "max_x": max(ratios_x),
        "max_d": max(ratios_d),
        "count": len(ratios_x),
    }
    report["uniformity_x"] = report["max_x"] / report["baseline_x"]
    report["uniformity_d"] = report["max_d"] / report["baseline_d"]
    return report
