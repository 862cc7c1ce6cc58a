"""Entire nonlinearities and the local-in-time Duhamel iteration.

A nonlinearity is a truncated power series in (u, conj u) with no constant
term, applied pointwise. The solver iterates the Duhamel map

    u(t) = S(t) u0 - i * integral_0^t S(t - s) F(u(s)) ds

on a knot grid, with trapezoid quadrature in s. The linear propagator comes
either from a parametrix plan or from a split-step reference config; both
shipped generators are autonomous, which is what lets S(t, s) collapse to
S(t - s) and one evolution sweep serve every quadrature pair.
"""

from dataclasses import dataclass, field

import numpy as np

from . import core, parametrix, reference, tfa

_MAX_DEGREE = 9
_MAX_SWEEPS = 30


class NonlinearError(RuntimeError):
    """Duhamel iteration failed to contract on the given horizon."""


@dataclass
class AnalyticNonlinearity:
    """Coefficient table of F(u) = sum c[j, k] u^j conj(u)^k, F(0) = 0.

    Keys are (j, k) power pairs. The series is entire by fiat: it is a
    polynomial of total degree at most 9, which covers every shipped case
    and keeps pointwise evaluation cheap.
    """

    table: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, c in self.table.items():
            j, k = key
            j, k = int(j), int(k)
            if j < 0 or k < 0:
                raise ValueError("powers must be nonnegative")
            if j + k > _MAX_DEGREE:
                raise ValueError(f"total degree {j + k} exceeds {_MAX_DEGREE}")
            c = complex(c)
            if not np.isfinite(c.real) or not np.isfinite(c.imag):
                raise ValueError("coefficients must be finite")
            if (j, k) == (0, 0):
                if c != 0.0:
                    raise ValueError("constant term must vanish (F(0) = 0)")
                continue
            if c != 0.0:
                clean[(j, k)] = c
        self.table = clean

    @property
    def degree(self):
        return max((j + k for j, k in self.table), default=0)

    @classmethod
    def cubic(cls, coupling=1.0):
        """F(u) = coupling |u|^2 u, the cubic Schrodinger term."""
        return cls({(2, 1): coupling})


def apply_F(F, u):
    """Pointwise evaluation of the truncated series on a field."""
    vals = np.asarray(u.values, dtype=np.complex128)
    out = np.zeros_like(vals)
    conj = np.conj(vals)
    for (j, k), c in F.table.items():
        out += c * vals**j * conj**k
    return core.Field(u.grid, out)


def algebra_constant(grid, npairs=20, seed=7):
    """Worst measured ratio of the pointwise-product modulation norm.

    Random mixtures of a few shifted atoms stand in for generic fields;
    the returned constant is what makes the truncated series map the
    norm ball into itself at small radius.
    """
    rng = np.random.default_rng(seed)
    win = core.gaussian_window(grid)
    worst = 0.0
    for _ in range(npairs):
        f = _atom_mixture(grid, win, rng)
        g = _atom_mixture(grid, win, rng)
        prod = core.Field(grid, f.values * g.values)
        num = tfa.modulation_norm(prod, p=1.0)
        den = tfa.modulation_norm(f, p=1.0) * tfa.modulation_norm(g, p=1.0)
        worst = max(worst, num / den)
    return worst


def _atom_mixture(grid, win, rng):
    vals = np.zeros(grid.n, dtype=np.complex128)
    for _ in range(rng.integers(2, 5)):
        z = rng.uniform(-4.0, 4.0, size=2)
        amp = rng.normal() + 1j * rng.normal()
        vals += amp * core.time_freq_shift(win.field, z).values
    return core.Field(grid, vals)


# ---------------------------------------------------------------------------
# Linear evolution sweeps


def _make_evolver(prop, nknots):
    """evolve(u, count) -> [S(k dt) u for k < count], dt the knot spacing."""
    if isinstance(prop, parametrix.PropagatorPlan):

        def evolve(u, count):
            fields, _ = parametrix.propagate_all(prop, u)
            return fields[:count]

        return evolve

    knot = reference.SplitStepConfig(
        grid=prop.grid,
        sigma=prop.sigma,
        potential=prop.potential,
        dt=prop.dt,
        steps=prop.steps // (nknots - 1),
    )

    def evolve(u, count):
        out = [core.Field(u.grid, np.asarray(u.values, dtype=np.complex128))]
        for _ in range(count - 1):
            out.append(reference.split_step(out[-1], knot))
        return out

    return evolve


def _check_prop(prop, T0, nsteps):
    if isinstance(prop, parametrix.PropagatorPlan):
        if abs(float(prop.times[-1]) - T0) > 1e-12:
            raise ValueError("plan horizon differs from T0")
        return prop.nknots
    if isinstance(prop, reference.SplitStepConfig):
        if prop.potential.ndim != 1:
            raise ValueError("Duhamel sweeps need an autonomous propagator")
        if abs(prop.T - T0) > 1e-12:
            raise ValueError("split-step horizon differs from T0")
        if prop.steps % nsteps != 0:
            raise ValueError("steps must divide evenly into the knot grid")
        return nsteps + 1
    raise TypeError("prop must be a parametrix plan or a split-step config")


@dataclass
class DuhamelSolution:
    times: np.ndarray
    fields: list
    iterations: int
    ratios: np.ndarray
    ratio: float
    residual: float


def duhamel_picard(u0, F, prop, T0, tol=1e-8, nsteps=16):
    """Picard iteration of the Duhamel map on [0, T0].

    `prop` supplies the linear flow: a parametrix plan (whose own knot
    grid is used) or a split-step config with `nsteps` knots. Stops when
    successive iterates differ by less than `tol` in sup-over-t M1 norm;
    after 30 sweeps without that, gives up with advice to shrink T0 or u0.
    """
    nknots = _check_prop(prop, T0, nsteps)
    times = (
        np.asarray(prop.times, dtype=np.float64)
        if isinstance(prop, parametrix.PropagatorPlan)
        else np.linspace(0.0, T0, nknots)
    )
    dt = float(times[1] - times[0])
    evolve = _make_evolver(prop, nknots)
    lin = evolve(u0, nknots)

    def sweep(cur):
        # S(t_m - s_k) F(cur[k]) comes from one evolution of each knot's
        # image; trapezoid weights are 1/2 at both endpoints.
        images = [evolve(apply_F(F, f), nknots - k)
                  for k, f in enumerate(cur)]
        out = [core.Field(u0.grid, lin[0].values.copy())]
        for m in range(1, nknots):
            acc = 0.5 * images[0][m].values + 0.5 * images[m][0].values
            for k in range(1, m):
                acc = acc + images[k][m - k].values
            out.append(core.Field(u0.grid, lin[m].values - 1j * dt * acc))
        return out

    def gap(a, b):
        return max(
            tfa.modulation_norm(core.Field(u0.grid, x.values - y.values), p=1.0)
            for x, y in zip(a, b)
        )

    cur = lin
    dists = []
    for it in range(_MAX_SWEEPS):
        nxt = sweep(cur)
        d = gap(nxt, cur)
        if not np.isfinite(d) or (dists and d > 1e6 * dists[0]):
            raise NonlinearError(
                f"iterates diverged after {it + 1} sweeps; shrink T0 or u0"
            )
        dists.append(d)
        cur = nxt
        if d < tol:
            ratios = np.array(
                [dists[i + 1] / dists[i] for i in range(len(dists) - 1)
                 if dists[i] > 0.0]
            )
            gmean = float(np.exp(np.mean(np.log(ratios)))) if len(ratios) else 0.0
            fixed = sweep(cur)
            residual = gap(fixed, cur)
            return DuhamelSolution(
                times=times,
                fields=cur,
                iterations=it + 1,
                ratios=ratios,
                ratio=gmean,
                residual=residual,
            )
    tail = dists[-1] / dists[-2] if len(dists) > 1 and dists[-2] > 0 else np.inf
    raise NonlinearError(
        f"no contraction after {_MAX_SWEEPS} sweeps (last ratio {tail:.3f}); "
        "shrink T0 or u0"
    )


def bisect_horizon(u0, F, make_prop, T0, tol=1e-8, target=0.9, rounds=8,
                   nsteps=16):
    """Largest tested horizon whose Picard ratios stay below `target`.

    `make_prop(h)` must build the linear propagator for horizon h. The
    search bisects downward from T0; there is no sharp threshold to find,
    only a certified working value, so it stops once the bracket is tight
    relative to the answer.
    """

    def measure(h):
        try:
            sol = duhamel_picard(u0, F, make_prop(h), h, tol, nsteps=nsteps)
        except NonlinearError:
            return np.inf, None
        worst = float(np.max(sol.ratios)) if len(sol.ratios) else 0.0
        return worst, sol

    r, sol = measure(T0)
    if r <= target:
        return T0, sol
    lo, hi = 0.0, T0
    best = None
    good = 0.0
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        r, sol = measure(mid)
        if r <= target:
            lo, good, best = mid, mid, sol
        else:
            hi = mid
        if best is not None and (hi - lo) < 0.25 * lo:
            break
    if best is None:
        raise NonlinearError(
            f"no contracting horizon found below T0 = {T0:g}; shrink T0 or u0"
        )
    return good, best
