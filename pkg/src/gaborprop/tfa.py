"""Time-frequency analysis on the grid: STFT, Gabor frames, modulation
norms, and the Sjostrand-class envelope diagnostics.

The STFT here is the pairing V_g f(z) = <f, pi(z) g> with pi = T_x M_w.
That phase convention (rather than the <f, M_w T_x g> variant, which has
the same modulus) is what makes the frame synthesis below and the
parametrix on top of it close up exactly.
"""

from dataclasses import dataclass, field as dc_field
import logging

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator

from . import core
from .conventions import FRAME_CRITICAL_DENSITY, MOD_NORM_CONST, gabor_cell_weight

log = logging.getLogger(__name__)


def _window_values(w):
    return w.values if hasattr(w, "values") else np.asarray(w, dtype=np.complex128)


# ---------------------------------------------------------------------------
# STFT


@dataclass
class StftGrid:
    """V_g f sampled on grid x times dual grid; values[j, k] = V(x_j, xi_k)."""

    grid: core.SpatialGrid
    values: np.ndarray

    @property
    def x(self):
        return self.grid.x

    @property
    def omega(self):
        return self.grid.dual().x

    def cell_area(self):
        return self.grid.h * self.grid.dxi


def stft(f, window):
    """Full-grid STFT, one FFT per x-shift (batched)."""
    g = f.grid
    n = g.n
    wv = _window_values(window)
    # T_{x_j} w as rows: w((i - j)h) = w[(i - j + n/2) mod n]
    i = np.arange(n)
    shift_idx = (i[None, :] - i[:, None] + n // 2) % n
    prod = f.values[None, :] * np.conj(wv[shift_idx])
    spec = core._fourier_values(prod, g)  # rows: INT f conj(T_x w) e^{-i y w} dy
    spec *= np.exp(1j * np.outer(g.x, g.dual().x))  # the e^{i w x} of <f, T_x M_w g>
    return StftGrid(grid=g, values=spec)


def stft_points(f, window, zs):
    """V_g f at arbitrary phase-space points zs (m, 2); exact, spectral."""
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    atoms = core.tf_shift_values(_window_values(window), f.grid, zs[:, 0], zs[:, 1])
    return f.grid.h * (np.conj(atoms) @ f.values)


def stft_point(f, window, z):
    return complex(stft_points(f, window, [z])[0])


def stft_sup_profile(f, window):
    """(omega, H) with H(omega) = max_x |V_g f(x, omega)|."""
    V = stft(f, window)
    return V.omega, np.max(np.abs(V.values), axis=0)


# ---------------------------------------------------------------------------
# Gabor lattices and frames


@dataclass(frozen=True)
class PhaseLattice:
    """Rectangular lattice alpha Z x beta Z truncated to a phase box."""

    alpha: float
    beta: float
    jmax: int
    kmax: int

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("lattice steps must be positive")
        if self.alpha * self.beta >= FRAME_CRITICAL_DENSITY:
            raise ValueError(
                "alpha*beta >= 2 pi: the Gaussian Gabor system is not a frame"
            )

    @classmethod
    def from_box(cls, alpha, beta, xmax, ximax):
        return cls(
            alpha=float(alpha),
            beta=float(beta),
            jmax=int(np.floor(xmax / alpha + 1e-9)),
            kmax=int(np.floor(ximax / beta + 1e-9)),
        )

    @property
    def shape(self):
        return (2 * self.jmax + 1, 2 * self.kmax + 1)

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    @property
    def cell_weight(self):
        return gabor_cell_weight(self.alpha, self.beta)

    def nodes(self):
        """(size, 2) array of (x, xi) nodes, j-major ordering."""
        j = np.arange(-self.jmax, self.jmax + 1) * self.alpha
        k = np.arange(-self.kmax, self.kmax + 1) * self.beta
        J, K = np.meshgrid(j, k, indexing="ij")
        return np.column_stack([J.ravel(), K.ravel()])


@dataclass
class GaborCoeffs:
    lattice: PhaseLattice
    values: np.ndarray  # flat, lattice node order
    truncation_loss: float

    def as_grid(self):
        return self.values.reshape(self.lattice.shape)


def atom_matrix(grid, window, nodes):
    """Rows pi(z) w for each node z; the analysis/synthesis workhorse."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    return core.tf_shift_values(_window_values(window), grid, nodes[:, 0], nodes[:, 1])


def gabor_coefficients(f, lattice, window, loss_threshold=1e-6):
    """<f, pi(lambda) w> over the lattice, with a truncation-energy audit.

    The audit compares sum |c|^2 * cell_weight against ||f||^2 (they agree
    when the truncated box captures the coefficient energy); a shortfall
    beyond `loss_threshold` is logged as a warning, not raised.
    """
    A = atom_matrix(f.grid, window, lattice.nodes())
    c = f.grid.h * (np.conj(A) @ f.values)
    nf2 = core.norm(f) ** 2
    loss = 0.0
    if nf2 > 0:
        captured = lattice.cell_weight * float(np.sum(np.abs(c) ** 2)) / nf2
        loss = max(0.0, 1.0 - captured)
    if loss > loss_threshold:
        log.warning(
            "lattice truncation loses %.3e of coefficient energy (threshold %.1e)",
            loss,
            loss_threshold,
        )
    return GaborCoeffs(lattice=lattice, values=c, truncation_loss=loss)


def gabor_synthesis(coeffs, lattice, window, grid):
    """sum_lambda c_lambda pi(lambda) w * alpha beta (2 pi)^{-d}."""
    c = coeffs.values if isinstance(coeffs, GaborCoeffs) else np.asarray(coeffs)
    A = atom_matrix(grid, window, lattice.nodes())
    return core.Field(grid, lattice.cell_weight * (A.T @ c.ravel()))


def frame_operator(lattice, window, grid, nodes=None):
    """S f = cell_weight * sum <f, pi(l) g> pi(l) g as a LinearOperator."""
    A = atom_matrix(grid, window, nodes if nodes is not None else lattice.nodes())
    w = lattice.cell_weight
    h = grid.h

    def apply(v):
        return w * (A.T @ (h * (np.conj(A) @ v)))

    return LinearOperator(
        (grid.n, grid.n), matvec=apply, rmatvec=apply, dtype=np.complex128
    )


def frame_gram(lattice, window, grid, nodes=None):
    """The frame operator assembled as a dense Hermitian n x n matrix."""
    A = atom_matrix(grid, window, nodes if nodes is not None else lattice.nodes())
    return lattice.cell_weight * grid.h * (A.T @ np.conj(A))


def dual_window(lattice, window, grid=None, delta=1e-10, nodes=None):
    """Canonical dual gamma = S^{-1} g, dense solve with a Tikhonov floor.

    On a truncated phase box S has a continuum of near-null modes outside
    the box, and its inverse leaks into the interior with a boundary-layer
    decay about half the |V_g g| rate. The floor `delta` pins the null
    directions (iterative solvers semiconverge here); the box edge, not
    the solver, then sets the quality of gamma. Returns (gamma, info).
    """
    grid = grid or window.grid
    S = frame_gram(lattice, window, grid, nodes=nodes)
    b = _window_values(window)
    S[np.diag_indices_from(S)] += delta
    sol = np.linalg.solve(S, b)
    S[np.diag_indices_from(S)] -= delta
    residual = float(np.linalg.norm(S @ sol - b) / np.linalg.norm(b))
    gamma = core.Window(field=core.Field(grid, sol), tau=getattr(window, "tau", 1.0),
                        normalized=False)
    return gamma, {"residual": residual, "delta": delta}


def frame_project(f, lattice, window, delta=1e-10):
    """Reconstruction through the canonical dual frame of the truncated box.

    Analysis with the per-atom duals S^{-1} pi(lambda) g collapses to a
    single solve against the field, c = h conj(A) S^{-1} f, so this is
    the orthogonal-projection-quality reconstruction: error = distance of
    f to the atom span, with no boundary-layer penalty.
    """
    grid = f.grid
    A = atom_matrix(grid, window, lattice.nodes())
    S = lattice.cell_weight * grid.h * (A.T @ np.conj(A))
    S[np.diag_indices_from(S)] += delta
    y = np.linalg.solve(S, f.values)
    c = grid.h * (np.conj(A) @ y)
    return core.Field(grid, lattice.cell_weight * (A.T @ c))


def frame_reconstruct(f, lattice, window, gamma):
    """Analysis with the dual gamma, synthesis with g."""
    c = gabor_coefficients(f, lattice, gamma, loss_threshold=np.inf)
    return gabor_synthesis(c, lattice, window, f.grid)


def frame_bounds(lattice, window, grid=None, nprobe=24, seed=0):
    """Measured frame bounds: Rayleigh quotients of S over a probe corpus.

    The corpus is random superpositions of shifted dilated Gaussians well
    inside the phase box, since the global spectrum of the truncated S is
    degenerate outside it. Returns (A, B, ratios).
    """
    grid = grid or window.grid
    S = frame_operator(lattice, window, grid)
    rng = np.random.default_rng(seed)
    xb = 0.5 * lattice.jmax * lattice.alpha
    kb = 0.5 * lattice.kmax * lattice.beta
    ratios = []
    for _ in range(nprobe):
        f = np.zeros(grid.n, dtype=np.complex128)
        for _ in range(3):
            x0 = rng.uniform(-xb, xb)
            w0 = rng.uniform(-kb, kb)
            tau = rng.uniform(0.7, 1.6)
            amp = rng.normal() + 1j * rng.normal()
            f += amp * np.exp(-np.pi * ((grid.x - x0) / tau) ** 2 + 1j * w0 * grid.x)
        nrm2 = grid.h * np.vdot(f, f).real
        ratios.append(float((grid.h * np.vdot(f, S @ f)).real / nrm2))
    ratios = np.array(ratios)
    return float(ratios.min()), float(ratios.max()), ratios


# ---------------------------------------------------------------------------
# Modulation norms


def modulation_norm(f, p=2.0, q=None, weight=None, window=None):
    """||f||_{M^{p,q}_m} with the ledger prefactor (2 pi)^{-d/2}.

    q defaults to p. `weight` is a callable on (..., 2) phase points (or a
    core.Weight). The inner L^p is over x, the outer L^q over omega;
    p or q = inf take sups.
    """
    q = p if q is None else q
    if not (p >= 1 and q >= 1):
        raise ValueError("modulation norm needs p, q >= 1")
    window = window or core.gaussian_window(f.grid)
    V = stft(f, window)
    mag = np.abs(V.values)
    if weight is not None:
        X, W = np.meshgrid(V.x, V.omega, indexing="ij")
        pts = np.stack([X, W], axis=-1)
        mag = mag * core.weight_eval(weight, pts)
    h, dxi = f.grid.h, f.grid.dxi
    if np.isinf(p):
        inner_ = np.max(mag, axis=0)
    else:
        inner_ = (np.sum(mag ** p, axis=0) * h) ** (1.0 / p)
    if np.isinf(q):
        outer_ = np.max(inner_)
    else:
        outer_ = (np.sum(inner_ ** q) * dxi) ** (1.0 / q)
    return float(MOD_NORM_CONST * outer_)


def change_window_check(f, g0, g1, gamma):
    """Pointwise window-change domination on the STFT grid.

    Checks |V_{g0} f| <= |<gamma, g1>|^{-1} (|V_{g1} f| * |V_gamma g0|)
    with a zero-padded linear convolution; returns the worst relative
    violation (negative or ~0 when the inequality holds).
    """
    grid = f.grid
    pairing = abs(core.inner(gamma.field if hasattr(gamma, "field") else gamma,
                             g1.field if hasattr(g1, "field") else g1))
    if pairing < 1e-12:
        raise ValueError("<gamma, g1> is numerically zero; lemma does not apply")
    V0 = np.abs(stft(f, g0).values)
    V1 = np.abs(stft(f, g1).values)
    Vg = np.abs(stft(g0.field if hasattr(g0, "field") else g0, gamma).values)
    n = grid.n
    conv = fftconvolve(V1, Vg, mode="full")[n // 2 : n // 2 + n, n // 2 : n // 2 + n]
    bound = conv * grid.h * grid.dxi / pairing
    scale = np.max(V0)
    violation = float(np.max(V0 - bound) / scale)
    return {"max_violation_rel": violation, "pairing": float(pairing)}


def dilated_window_mass(tau, grid=None):
    """||V_g g_tau||_{L1} with g_tau(x) = g(x/tau), g the standard window."""
    if grid is None:
        grid = core.make_grid(16.0, 1024)
    g = core.gaussian_window(grid)
    gt_vals = 2.0 ** 0.25 * np.exp(-np.pi * (grid.x / tau) ** 2)
    gt = core.Field(grid, gt_vals.astype(np.complex128))
    band = core.Window(field=gt, tau=tau).band_halfwidth(1e-12)
    if band > grid.nyquist:
        raise ValueError(
            f"tau={tau} puts the dilated window outside the grid band; "
            f"needs Nyquist >= {band:.1f}, grid has {grid.nyquist:.1f}"
        )
    V = stft(gt, g)
    return float(np.sum(np.abs(V.values)) * grid.h * grid.dxi)


# ---------------------------------------------------------------------------
# Two-dimensional (phase-plane) STFT for symbol envelopes


@dataclass(frozen=True)
class PhaseGrid2:
    """Product grid for sampled symbols a(x, xi)."""

    gx: core.SpatialGrid
    gxi: core.SpatialGrid

    @property
    def shape(self):
        return (self.gx.n, self.gxi.n)

    def mesh(self):
        return np.meshgrid(self.gx.x, self.gxi.x, indexing="ij")

    def cell_area(self):
        return self.gx.h * self.gxi.h


@dataclass
class TensorWindow2:
    """Separable window Phi(u, xi) = wx(u) wxi(xi) on a PhaseGrid2."""

    pgrid: PhaseGrid2
    wx: np.ndarray
    wxi: np.ndarray

    def l2_norm(self):
        nx = np.sqrt(self.pgrid.gx.h) * np.linalg.norm(self.wx)
        ni = np.sqrt(self.pgrid.gxi.h) * np.linalg.norm(self.wxi)
        return float(nx * ni)

    def normalized(self):
        nrm = self.l2_norm()
        return TensorWindow2(self.pgrid, self.wx / nrm, self.wxi)


def _fourier2(values, pgrid):
    """2-d version of `fourier`, batched over any leading axes."""
    A = core._fourier_values(values, pgrid.gxi)           # xi -> w2
    A = core._fourier_values(A.swapaxes(-1, -2), pgrid.gx)  # x -> w1
    return A.swapaxes(-1, -2)


@dataclass
class EnvelopeFn:
    """Dominating envelope H(w) = max over sampled z of |V_Phi a(z, w)|.

    A lower bound of the true sup over z (the max runs over grid shifts
    with the recorded stride); mass and decay diagnostics operate on the
    (w1, w2) grid.
    """

    w1: np.ndarray
    w2: np.ndarray
    H: np.ndarray
    z_stride: tuple

    def eval(self, points):
        interp = RegularGridInterpolator(
            (self.w1, self.w2), self.H, bounds_error=False, fill_value=0.0
        )
        return interp(np.atleast_2d(np.asarray(points, dtype=float)))

    def mass(self, weight=None):
        dw = (self.w1[1] - self.w1[0]) * (self.w2[1] - self.w2[0])
        if weight is None:
            return float(np.sum(self.H) * dw)
        W1, W2 = np.meshgrid(self.w1, self.w2, indexing="ij")
        pts = np.stack([W1, W2], axis=-1)
        return float(np.sum(self.H * core.weight_eval(weight, pts)) * dw)

    def sup(self):
        return float(np.max(self.H))

    def decay_fit(self, axis=0, wmin=3.0, wmax=30.0):
        """Log-log decay exponent of the profile max'd over the other axis."""
        w = self.w1 if axis == 0 else self.w2
        prof = np.max(self.H, axis=1 - axis)
        sel = (np.abs(w) >= wmin) & (np.abs(w) <= wmax) & (prof > 1e-14)
        if np.count_nonzero(sel) < 8:
            raise ValueError("not enough envelope samples in the fit range")
        slope, _ = np.polyfit(np.log10(1.0 + np.abs(w[sel])), np.log10(prof[sel]), 1)
        return float(-slope)


def sjostrand_envelope(samples, pgrid, window2, z_stride=(4, 4)):
    """Envelope of a sampled symbol: max over strided grid z-shifts.

    One 2-d FFT per z-shift; the documented semantics are a lower bound of
    sup_z, tight once the stride is below the window widths.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape != pgrid.shape:
        raise ValueError(f"symbol shape {samples.shape} != grid {pgrid.shape}")
    n1, n2 = pgrid.shape
    sx, si = z_stride
    # all xi-shifts of the window, precomputed as rows
    qs = np.arange(0, n2, si)
    Ti = np.conj(window2.wxi)[(np.arange(n2)[None, :] - (qs[:, None] - n2 // 2)) % n2]
    H = np.zeros((n1, n2))
    chunk = max(1, int(2**22 / (n1 * n2)))  # keep the FFT batch around 64 MB
    for p in range(0, n1, sx):
        Tx = np.roll(np.conj(window2.wx), p - n1 // 2)
        for q0 in range(0, len(qs), chunk):
            P = samples[None, :, :] * Tx[None, :, None] * Ti[q0 : q0 + chunk, None, :]
            np.maximum(H, np.max(np.abs(_fourier2(P, pgrid)), axis=0), out=H)
    return EnvelopeFn(
        w1=pgrid.gx.dual().x, w2=pgrid.gxi.dual().x, H=H, z_stride=(sx, si)
    )


def stft2_point(samples, pgrid, window2, z, w):
    """V_Phi a(z, w) at one exact phase-plane point (separable window)."""
    ax = core.tf_shift_values(window2.wx.astype(np.complex128), pgrid.gx,
                              [z[0]], [w[0]])[0]
    ai = core.tf_shift_values(window2.wxi.astype(np.complex128), pgrid.gxi,
                              [z[1]], [w[1]])[0]
    atom = np.outer(ax, ai)
    return complex(pgrid.cell_area() * np.sum(samples * np.conj(atom)))
