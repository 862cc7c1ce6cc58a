"""Grids, fields, windows, and the transforms everything else builds on.

One periodic grid convention: x_j = -L/2 + j h with h = L/n, n a power of
two. Functions are assumed negligible at the fold |x| = L/2; `edge_mass`
measures how true that is for a given field. The Fourier pair follows the
convention ledger (angular frequency, un-normalized forward transform), and
the dual grid of a SpatialGrid is again a SpatialGrid, so frequency-side
data reuses the Field machinery unchanged.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
import json

import numpy as np

from .conventions import INV_FOURIER_CONST  # noqa: F401  (documented anchor)


def _is_power_of_two(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid on [-L/2, L/2) with n samples."""

    L: float
    n: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError(f"grid length must be positive, got L={self.L}")
        if not _is_power_of_two(self.n):
            raise ValueError(f"grid size must be a power of two >= 2, got n={self.n}")

    @cached_property
    def h(self):
        return self.L / self.n

    @cached_property
    def x(self):
        return -self.L / 2.0 + self.h * np.arange(self.n)

    @cached_property
    def dxi(self):
        return 2.0 * np.pi / self.L

    @cached_property
    def xi(self):
        """Monotone angular frequencies [-pi/h, pi/h), spacing 2 pi / L."""
        return -np.pi / self.h + self.dxi * np.arange(self.n)

    @cached_property
    def nyquist(self):
        return np.pi / self.h

    def dual(self):
        """The frequency-side grid; dual(dual(g)) == g."""
        return SpatialGrid(L=2.0 * np.pi / self.h, n=self.n)

    def local_subgrid(self, divisor=4):
        """Centered subgrid with the same spacing and length L/divisor."""
        if self.n % (2 * divisor) != 0:
            raise ValueError(f"divisor {divisor} does not evenly split n={self.n}")
        return SpatialGrid(L=self.L / divisor, n=self.n // divisor)

    def embed_offset(self, sub):
        """Index of a centered subgrid's first point inside this grid."""
        off = (self.n - sub.n) // 2
        if not np.isclose(self.x[off], sub.x[0], rtol=0, atol=1e-12 * self.L):
            raise ValueError("subgrid is not aligned with this grid")
        return off


def make_grid(L, n):
    """Validated grid constructor. L > 0, n a power of two."""
    return SpatialGrid(float(L), int(n))


@dataclass
class Field:
    """Complex samples of a function on a SpatialGrid."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n,):
            raise ValueError(
                f"field shape {v.shape} does not match grid n={self.grid.n}"
            )
        self.values = v

    def copy(self):
        return Field(self.grid, self.values.copy())

    def norm(self):
        return norm(self)


def inner(f, g):
    """L2 pairing <f, g> = h * sum f conj(g); conjugate-linear in g."""
    if f.grid != g.grid:
        raise ValueError("inner product needs both fields on the same grid")
    return f.grid.h * np.vdot(g.values, f.values)  # vdot conjugates its 1st arg


def norm(f):
    return float(np.sqrt(f.grid.h) * np.linalg.norm(f.values))


def edge_mass(f):
    """Relative magnitude at the periodic fold, for the truncation check."""
    peak = np.max(np.abs(f.values))
    if peak == 0.0:
        return 0.0
    return float(max(abs(f.values[0]), abs(f.values[-1])) / peak)


# ---------------------------------------------------------------------------
# Fourier pair


def fourier(f):
    """Ff(xi) = INT e^{-i x xi} f(x) dx, returned on the dual grid.

    Implemented as one FFT with the half-period phase correction coming
    from x_0 = -L/2, then reordered so the dual grid is monotone.
    """
    g = f.grid
    spec = g.h * np.fft.fft(f.values)
    xi_fft = 2.0 * np.pi * np.fft.fftfreq(g.n, d=g.h)
    spec *= np.exp(1j * xi_fft * (g.L / 2.0))
    return Field(g.dual(), np.fft.fftshift(spec))


def inverse_fourier(F):
    """Exact inverse of `fourier`; carries the (2 pi)^{-d} constant."""
    gd = F.grid
    g = gd.dual()  # back to the spatial side
    spec = np.fft.ifftshift(F.values.copy())
    xi_fft = 2.0 * np.pi * np.fft.fftfreq(g.n, d=g.h)
    spec *= np.exp(-1j * xi_fft * (g.L / 2.0)) / g.h
    return Field(g, np.fft.ifft(spec))


def _fourier_values(values, grid):
    """fourier() on a batch of rows (shape (..., n)), values only."""
    spec = grid.h * np.fft.fft(values, axis=-1)
    xi_fft = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.h)
    spec *= np.exp(1j * xi_fft * (grid.L / 2.0))
    return np.fft.fftshift(spec, axes=-1)


def _inverse_fourier_values(spec_mono, grid):
    """Inverse of `_fourier_values` (grid is the spatial-side grid)."""
    spec = np.fft.ifftshift(spec_mono, axes=-1)
    xi_fft = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.h)
    spec = spec * np.exp(-1j * xi_fft * (grid.L / 2.0)) / grid.h
    return np.fft.ifft(spec, axis=-1)


# ---------------------------------------------------------------------------
# Time-frequency shifts


def translate(f, a):
    """T_a f = f(. - a). Grid multiples roll; anything else goes spectral."""
    g = f.grid
    steps = a / g.h
    if abs(steps - round(steps)) < 1e-12:
        return Field(g, np.roll(f.values, int(round(steps)))) if round(steps) else f.copy()
    spec = _fourier_values(f.values, g)
    spec *= np.exp(-1j * a * g.xi)
    return Field(g, _inverse_fourier_values(spec, g))


def modulate(f, omega):
    """M_w f = e^{i w x} f. Pointwise, exact for any omega."""
    return Field(f.grid, f.values * np.exp(1j * omega * f.grid.x))


def time_freq_shift(f, z):
    """pi(z) f = T_x M_w f, i.e. y -> e^{i w (y - x)} f(y - x)."""
    x, omega = z
    return translate(modulate(f, omega), x)


def tf_shift_values(values, grid, xs, omegas):
    """Batched pi(x_i, w_i) applied to one vector; returns (m, n) rows.

    One forward FFT of `values`, then a batched phase multiply and inverse
    FFT. This is the workhorse behind atom matrices, so it avoids per-node
    Python overhead.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if xs.shape != omegas.shape:
        raise ValueError("xs and omegas must have matching shapes")
    # pi(x,w) f = T_x (M_w f); M_w in x-space, T_x in frequency.
    mod = values[None, :] * np.exp(1j * np.outer(omegas, grid.x))
    spec = _fourier_values(mod, grid)
    spec *= np.exp(-1j * np.outer(xs, grid.xi))
    return _inverse_fourier_values(spec, grid)


# ---------------------------------------------------------------------------
# Windows


@dataclass
class Window:
    """A sampled analysis window with its decay metadata.

    `tau` records the Gaussian dilation g(x/tau); band/space halfwidths for
    a given tolerance fall out of it in closed form and feed the
    representability margins in the propagator plan.
    """

    field: Field
    tau: float = 1.0
    normalized: bool = True

    @property
    def grid(self):
        return self.field.grid

    @property
    def values(self):
        return self.field.values

    def band_halfwidth(self, tol=1e-8):
        """|xi| beyond which the window spectrum is below tol * peak."""
        return np.sqrt(4.0 * np.pi * np.log(1.0 / tol)) / self.tau

    def space_halfwidth(self, tol=1e-8):
        """|x| beyond which the window itself is below tol * peak."""
        return self.tau * np.sqrt(np.log(1.0 / tol) / np.pi)


def gaussian_window(grid, tau=1.0, normalize=True):
    """Gaussian window g(x/tau), g(x) = e^{-pi x^2}; unit L2 norm by default.

    The normalized tau=1 window is 2^{1/4} e^{-pi x^2} with
    ||g||_2 = 1 (the raw discrete norm of e^{-pi x^2} is 2^{-1/4} up to
    grid error, so normalization multiplies by 2^{1/4} tau^{-1/2}).
    """
    if tau <= 0:
        raise ValueError(f"window dilation must be positive, got tau={tau}")
    vals = np.exp(-np.pi * (grid.x / tau) ** 2).astype(np.complex128)
    f = Field(grid, vals)
    if normalize:
        nrm = norm(f)
        if nrm == 0.0:
            raise ValueError("window underflowed to zero on this grid")
        f = Field(grid, vals / nrm)
    return Window(field=f, tau=tau, normalized=normalize)


# ---------------------------------------------------------------------------
# Weights


@dataclass(frozen=True)
class Weight:
    """Weight on phase space; `fn` maps (..., 2) points to positive values."""

    name: str
    fn: object

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return self.fn(z)


def polynomial_weight(r):
    """v_r(z) = (1 + |z|^2)^{r/2}; submultiplicative up to 2^{|r|/2}."""

    def fn(z):
        z = np.asarray(z, dtype=float)
        return (1.0 + np.sum(z * z, axis=-1)) ** (r / 2.0)

    return Weight(name=f"v{r:g}", fn=fn)


def weight_eval(weight, z):
    """Evaluate a Weight (or plain callable) at points of shape (..., 2)."""
    w = weight(np.asarray(z, dtype=float))
    out = np.asarray(w, dtype=float)
    if np.any(out <= 0):
        raise ValueError("weights must be strictly positive")
    return out


# ---------------------------------------------------------------------------
# Serialization (text: '# L=<L> n=<n>' header, rows 'x re im'; and JSON)


def field_to_text(f):
    lines = [f"# L={f.grid.L:.17g} n={f.grid.n}"]
    for x, v in zip(f.grid.x, f.values):
        lines.append(f"{x:.17g} {v.real:.17g} {v.imag:.17g}")
    return "\n".join(lines) + "\n"


def field_from_text(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("field text must start with a '# L=<L> n=<n>' header")
    header = lines[0].lstrip("#").split()
    meta = dict(kv.split("=", 1) for kv in header)
    try:
        grid = make_grid(float(meta["L"]), int(meta["n"]))
    except KeyError as exc:
        raise ValueError(f"field header is missing {exc}") from exc
    rows = [ln.split() for ln in lines[1:]]
    if len(rows) != grid.n:
        raise ValueError(f"expected {grid.n} samples, found {len(rows)}")
    re = np.array([float(r[1]) for r in rows])
    im = np.array([float(r[2]) for r in rows])
    return Field(grid, re + 1j * im)


def field_to_json(f):
    return {
        "L": f.grid.L,
        "n": f.grid.n,
        "re": f.values.real.tolist(),
        "im": f.values.imag.tolist(),
    }


def field_from_json(obj):
    grid = make_grid(obj["L"], obj["n"])
    return Field(grid, np.asarray(obj["re"]) + 1j * np.asarray(obj["im"]))


def field_to_json_text(f):
    return json.dumps(field_to_json(f), sort_keys=True)


def field_from_json_text(text):
    return field_from_json(json.loads(text))
