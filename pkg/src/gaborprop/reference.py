"""Independent reference solvers and closed forms.

Nothing here touches the frame or parametrix machinery, so these
routines can sit on the other side of a comparison: a Strang split-step
solver for symbols of the form sigma(xi) + V(x), the exact free-particle
Gaussian, the chirp STFT modulus with its quadrature-validated constants,
a sup-norm lower-bound demonstration, the Weierstrass potential, and the
smooth/bounded splitting of fractional dispersion symbols.
"""

from dataclasses import dataclass

import numpy as np

from . import core, tfa, weyl


# ---------------------------------------------------------------------------
# Split-step solver


def _sigma_and_v(model, grid):
    """Collect sigma(xi) and V(x) samples from a structured symbol."""
    sigma = np.zeros(grid.n)
    pot = np.zeros(grid.n)
    xi = grid.dual().x
    for p in model.parts:
        if isinstance(p, weyl.QuadraticPoly):
            if p.cxxi != 0.0:
                raise ValueError("split-step cannot treat x.xi cross terms")
            sigma = sigma + p.cxi * xi + p.cxixi * xi**2
            pot = pot + p.c1 + p.cx * grid.x + p.cxx * grid.x**2
        elif isinstance(p, weyl.Multiplier):
            sigma = sigma + np.real(p.samples)
        elif isinstance(p, weyl.Potential):
            pot = pot + np.real(p.samples)
        else:
            raise ValueError(
                "split-step needs sigma(xi) + V(x) structure, got "
                f"{type(p).__name__}"
            )
    return sigma, pot


@dataclass
class SplitStepConfig:
    """Data for the Strang solver of D_t u + (sigma(D) + V) u = 0.

    `sigma` is sampled on the monotone dual grid. `potential` is either
    one row (autonomous) or `steps` rows of per-step midpoint samples.
    """

    grid: core.SpatialGrid
    sigma: np.ndarray
    potential: np.ndarray
    dt: float
    steps: int

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        self.potential = np.asarray(self.potential)
        if self.sigma.shape != (self.grid.n,):
            raise ValueError("sigma must be sampled on the dual grid")
        if self.potential.shape[-1] != self.grid.n:
            raise ValueError("potential rows must match the spatial grid")
        if self.potential.ndim == 2 and self.potential.shape[0] != self.steps:
            raise ValueError("need one potential row per step")
        if self.dt <= 0.0 or self.steps < 1:
            raise ValueError("dt and steps must be positive")

    @property
    def T(self):
        return self.dt * self.steps

    @classmethod
    def from_symbol(cls, symbol, grid, T, steps):
        dt = T / steps
        if isinstance(symbol, weyl.TimeSymbol):
            mids = [symbol.at((k + 0.5) * dt) for k in range(steps)]
            sigma, _ = _sigma_and_v(mids[0], grid)
            for m in mids[1:]:
                s2, _ = _sigma_and_v(m, grid)
                if np.max(np.abs(s2 - sigma)) > 1e-12:
                    raise ValueError("time-varying dispersion is not supported")
            pot = np.stack([_sigma_and_v(m, grid)[1] for m in mids])
        else:
            sigma, pot = _sigma_and_v(symbol, grid)
        return cls(grid=grid, sigma=sigma, potential=pot, dt=dt, steps=steps)


def split_step(u0, cfg, coupling=0.0):
    """Strang propagator for D_t u + (sigma(D) + V) u + c |u|^2 u = 0.

    Dispersion acts spectrally and the potential (plus the optional
    cubic term, whose substep conserves |u| pointwise) as a phase, so
    every factor is exact; the only error is the Strang commutator,
    second order in dt.
    """
    if u0.grid != cfg.grid:
        raise ValueError("field and config grids differ")
    half = np.exp(-0.5j * cfg.dt * np.fft.ifftshift(cfg.sigma))
    vals = np.asarray(u0.values, dtype=np.complex128).copy()
    static = cfg.potential.ndim == 1
    for k in range(cfg.steps):
        vals = np.fft.ifft(half * np.fft.fft(vals))
        v = cfg.potential if static else cfg.potential[k]
        if coupling != 0.0:
            v = v + coupling * np.abs(vals) ** 2
        vals = vals * np.exp(-1j * cfg.dt * v)
        vals = np.fft.ifft(half * np.fft.fft(vals))
    return core.Field(cfg.grid, vals)


# ---------------------------------------------------------------------------
# Closed forms


def free_gaussian_evolution(grid, t, x0=0.0, xi0=0.0, tau=1.0):
    """u(t) for D_t u + (xi^2)^w u = 0 from a normalized Gaussian atom.

    The initial state is the tau-dilated window time-frequency shifted
    by (x0, xi0); the evolution is one complex-width Gaussian integral.
    """
    B = tau**2 / (4.0 * np.pi) + 1j * t
    c = grid.x - x0 - 2.0 * t * xi0
    amp = 2.0**0.25 * np.sqrt(tau) / (2.0 * np.pi) * np.sqrt(np.pi / B)
    phase = np.exp(1j * xi0 * (grid.x - x0) - 1j * t * xi0**2)
    return core.Field(grid, amp * np.exp(-(c**2) / (4.0 * B)) * phase)


def chirp_stft_modulus(t, x, omega):
    """|V_g e^{i t (.)^2}|(x, omega) for the normalized Gaussian window.

    One Gaussian integral gives

        2^{1/4} sqrt(pi) (pi^2 + t^2)^{-1/4}
            exp(-pi (omega - 2 t x)^2 / (4 (pi^2 + t^2))),

    a ridge along the chirp's instantaneous frequency omega = 2 t x
    that flattens as |t| grows. Writing t = pi s turns the prefactor
    into 2^{1/4} (1 + s^2)^{-1/4} and the width into 4 pi (1 + s^2),
    the shape familiar from conventions with a 2 pi in the transform;
    the ridge slope keeps the extra factor 2 either way because it is
    the derivative of the phase t x^2.
    """
    x = np.asarray(x, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    w2 = np.pi**2 + t**2
    return (
        2.0**0.25
        * np.sqrt(np.pi)
        * w2**-0.25
        * np.exp(-np.pi * (omega - 2.0 * t * x) ** 2 / (4.0 * w2))
    )


def weierstrass_potential(x, depth=8):
    """The rough benchmark potential sum_{j<=depth} 2^-j cos(3^j x)."""
    x = np.asarray(x, dtype=np.float64)
    return sum(2.0**-j * np.cos(3.0**j * x) for j in range(depth + 1))


def minfty_illposedness_demo(times=(0.05, 0.1, 0.2), grid=None, window=None,
                             band=4.0, interior_margin=4.0):
    """Sup-profile lower bound for the chirp-minus-one field.

    For every frequency |omega| <= band the sup over interior x of
    |V_g(e^{itx^2} - 1)| must stay above |V_g 1|(omega) - 1e-3: however
    small t gets, the chirp stays far from 1 in the sup-STFT sense, so
    no propagator acting continuously in that norm can exist. Returns
    one report dict per time.
    """
    grid = grid if grid is not None else core.make_grid(32.0, 512)
    window = window if window is not None else core.gaussian_window(grid)
    reports = []
    for t in times:
        f = core.Field(grid, np.exp(1j * t * grid.x**2) - 1.0)
        V = tfa.stft(f, window)
        inside = np.abs(V.x) <= grid.L / 2.0 - interior_margin
        sup = np.max(np.abs(V.values[inside, :]), axis=0)
        sel = np.abs(V.omega) <= band
        bound = 2.0**0.25 * np.exp(-V.omega[sel] ** 2 / (4.0 * np.pi))
        margin = float(np.min(sup[sel] - bound))
        reports.append({
            "t": float(t),
            "band": float(band),
            "min_margin": margin,
            "passes": bool(margin > -1e-3),
        })
    return reports


# ---------------------------------------------------------------------------
# Fractional dispersion splitting


def smooth_cutoff(r, plateau=1.0, support=2.0):
    """C-infinity transition: 1 for |r| <= plateau, 0 for |r| >= support.

    Built as the ratio F(1-s) / (F(1-s) + F(s)) of one-sided
    exponentials F(s) = exp(-1/s), s the rescaled transition coordinate;
    every derivative vanishes at both edges.
    """
    if support <= plateau:
        raise ValueError("support must exceed plateau")
    s = (np.abs(np.asarray(r, dtype=np.float64)) - plateau) / (support - plateau)
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f_hi = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        f_lo = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return f_hi / (f_hi + f_lo)


def fractional_symbol_split(kappa, grid, plateau=1.0, support=2.0):
    """Split |xi|^kappa into a smooth dispersive part and a bounded rest.

    Returns (smooth_part, cutoff_part) as multipliers tagged 2 and 0:
    the cutoff part carries the |xi|^kappa kink at the origin but is
    compactly supported, the smooth part is flat near the origin and
    exactly |xi|^kappa outside the transition. Their samples sum to
    |xi|^kappa to roundoff.
    """
    if not 0.0 < kappa <= 2.0:
        raise ValueError("kappa must be in (0, 2]")
    xi = grid.dual().x
    mag = np.abs(xi) ** kappa
    chi = smooth_cutoff(xi, plateau, support)
    smooth_part = weyl.Multiplier(grid=grid, samples=mag * (1.0 - chi), tag=2)
    cutoff_part = weyl.Multiplier(grid=grid, samples=mag * chi, tag=0)
    return smooth_part, cutoff_part


def fractional_envelope_exponent(kappa, grid=None, wmin=1.5, wmax=30.0):
    """Fitted decay exponent of the cutoff part's frequency envelope.

    The cutoff part depends on xi alone, so its phase-plane envelope
    factorizes into a fixed Gaussian in the first slot times the 1-d
    sup-STFT profile of the multiplier samples; fitting that profile on
    log-log axes over roughly one decade gives the exponent. Expected a
    bit above kappa + 1 (the kink's Fourier tail).
    """
    grid = grid if grid is not None else core.make_grid(64.0, 1024)
    _, cutoff_part = fractional_symbol_split(kappa, grid)
    dual = grid.dual()
    f = core.Field(dual, cutoff_part.samples.astype(np.complex128))
    win = core.gaussian_window(dual, tau=np.pi * np.sqrt(2.0))
    w2, prof = tfa.stft_sup_profile(f, win)
    sel = (np.abs(w2) >= wmin) & (np.abs(w2) <= wmax) & (prof > 1e-14)
    slope, _ = np.polyfit(np.log10(1.0 + np.abs(w2[sel])), np.log10(prof[sel]), 1)
    return float(-slope)
