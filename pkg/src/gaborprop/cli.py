"""Experiment runner: INI configs in, reports and artifacts out.

Heavy modules are imported inside the subcommand handlers so the thread
caps chosen here land in the environment before numpy loads. Reports are
deterministic by construction: identical config and seed give the same
bytes, so wall-clock numbers go to a `timings.json` sidecar instead of
the report itself.
"""

import argparse
import configparser
import hashlib
import io
import json
import math
import os
import sys
import time

_EXIT_VALIDATION = 1
_EXIT_NUMERICAL = 2

_STEP_TOKENS = {
    "pi": math.pi,
    "pi/2": math.pi / 2.0,
    "pi/4": math.pi / 4.0,
    "2pi": 2.0 * math.pi,
}


class ConfigError(ValueError):
    """Bad or missing configuration value."""


def _step_value(text):
    key = text.strip().lower().replace(" ", "")
    if key in _STEP_TOKENS:
        return _STEP_TOKENS[key]
    return float(text)


class RunConfig:
    """Parsed INI config plus flag overrides, with typed accessors."""

    def __init__(self, path, args):
        self.path = path
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        self._data = {
            s: dict(parser.items(s)) for s in parser.sections()
        }
        canon = self.canonical_text()
        reparsed = configparser.ConfigParser()
        reparsed.read_string(canon)
        if {s: dict(reparsed.items(s)) for s in reparsed.sections()} != self._data:
            raise ConfigError("config does not round-trip through serialization")
        self.hash = hashlib.sha256(canon.encode()).hexdigest()
        self.seed = args.seed if args.seed is not None else self.get(
            "corpus", "seed", int, 7
        )
        self.tol_override = args.tol
        self.outdir = args.out or self.get("output", "dir", str, "gaborprop-out")

    def canonical_text(self):
        buf = io.StringIO()
        for section in sorted(self._data):
            buf.write(f"[{section}]\n")
            for key in sorted(self._data[section]):
                buf.write(f"{key} = {self._data[section][key]}\n")
        return buf.getvalue()

    def get(self, section, key, cast=str, default=None):
        raw = self._data.get(section, {}).get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing [{section}] {key}")
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad [{section}] {key} = {raw!r}") from exc

    # -- assembled objects ------------------------------------------------

    def grid(self):
        from . import core

        L = self.get("grid", "l", float)
        n = self.get("grid", "n", int)
        return core.make_grid(L, n)

    def lattice_params(self):
        alpha = self.get("lattice", "alpha", _step_value, 0.5)
        beta = self.get("lattice", "beta", _step_value, math.pi)
        if alpha * beta >= 2.0 * math.pi:
            raise ConfigError("need alpha * beta < 2 pi for a frame")
        return (
            alpha,
            beta,
            self.get("lattice", "xmax", float, 12.0),
            self.get("lattice", "ximax", float, 12.0),
        )

    def lattice(self):
        from . import tfa

        alpha, beta, xmax, ximax = self.lattice_params()
        return tfa.PhaseLattice.from_box(alpha, beta, xmax, ximax)

    def window(self, grid):
        from . import core

        return core.gaussian_window(grid, tau=self.get("window", "tau",
                                                       float, 1.0))

    def symbol(self, grid):
        from . import reference, weyl

        sec = self._data.get("symbol", {})
        tokens = [t.strip() for t in sec.get("parts", "").split(",") if t.strip()]
        if not tokens:
            raise ConfigError("missing [symbol] parts")
        parts = []
        for tok in tokens:
            if tok == "kinetic":
                parts.append(weyl.QuadraticPoly(cxixi=1.0))
            elif tok == "transport":
                parts.append(weyl.QuadraticPoly(cxi=1.0))
            elif tok == "position":
                parts.append(weyl.QuadraticPoly(cx=1.0))
            elif tok == "harmonic":
                parts.append(weyl.QuadraticPoly(cxx=1.0, cxixi=1.0))
            elif tok == "quad":
                coeffs = {
                    k[5:]: float(v)
                    for k, v in sec.items()
                    if k.startswith("quad_")
                }
                parts.append(weyl.QuadraticPoly(**coeffs))
            elif tok == "weierstrass":
                depth = self.get("symbol", "weierstrass_depth", int, 8)
                parts.append(
                    weyl.Potential.from_callable(
                        grid,
                        lambda x, d=depth: reference.weierstrass_potential(x, d),
                    )
                )
            elif tok.startswith("potential:"):
                parts.append(self._file_potential(tok[10:], grid))
            else:
                raise ConfigError(f"unknown symbol part {tok!r}")
        return weyl.SymbolModel(parts)

    def _file_potential(self, relpath, grid):
        import numpy as np

        from . import weyl

        path = os.path.join(os.path.dirname(self.path), relpath)
        if not os.path.exists(path):
            raise ConfigError(f"potential file not found: {path}")
        data = np.loadtxt(path)
        if data.ndim != 2 or data.shape != (grid.n, 2):
            raise ConfigError(
                f"potential file must hold {grid.n} rows of (x, v)"
            )
        return weyl.Potential(grid=grid, samples=data[:, 1], tag=0)

    def field(self, grid):
        import numpy as np

        from . import core

        sec = self._data.get("field", {})
        kind = sec.get("kind", "atom")
        win = self.window(grid)
        if kind == "atom":
            z = (self.get("field", "x0", float, 0.0),
                 self.get("field", "xi0", float, 0.0))
            amp = self.get("field", "amplitude", float, 1.0)
            return core.Field(grid, amp * core.time_freq_shift(win.field, z).values)
        if kind == "file":
            path = os.path.join(os.path.dirname(self.path),
                                self.get("field", "file", str))
            return read_field(path)
        if kind == "mixture":
            rng = np.random.default_rng(self.seed)
            count = self.get("field", "count", int, 4)
            box = self.get("field", "box", float, 4.0)
            vals = np.zeros(grid.n, dtype=np.complex128)
            for _ in range(count):
                z = rng.uniform(-box, box, size=2)
                amp = rng.normal() + 1j * rng.normal()
                vals += amp * core.time_freq_shift(win.field, z).values
            return core.Field(grid, vals)
        raise ConfigError(f"unknown field kind {kind!r}")

    def times(self):
        return (self.get("time", "t", float), self.get("time", "nsteps", int))

    def plan(self, symbol, grid, threads):
        from . import parametrix

        T, nsteps = self.times()
        alpha, beta, xmax, ximax = self.lattice_params()
        eps_v = self.tol_override or self.get("tolerances", "eps_v", float, 1e-8)
        return parametrix.build_plan(
            symbol,
            grid,
            T=T,
            nsteps=nsteps,
            alpha=alpha,
            beta=beta,
            xmax=xmax,
            ximax=ximax,
            substeps=self.get("time", "substeps", int, 4),
            eps_v=eps_v,
            trunc_tol=self.get("tolerances", "trunc", float, 1e-6),
            mode_floor=self.get("tolerances", "mode_floor", float, 1e-3),
            threads=threads,
        )


# ---------------------------------------------------------------------------
# Artifact writers


def write_field(path, f):
    lines = [
        "# gaborprop field",
        f"# L = {f.grid.L:.17g}",
        f"# n = {f.grid.n}",
        "# columns: x re im",
    ]
    for x, v in zip(f.grid.x, f.values):
        lines.append(f"{x:.12g} {v.real:.17g} {v.imag:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_field(path):
    import numpy as np

    from . import core

    L = n = None
    rows = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if "L =" in line:
                    L = float(line.split("=")[1])
                elif "n =" in line:
                    n = int(line.split("=")[1])
                continue
            if line:
                rows.append([float(p) for p in line.split()])
    if L is None or n is None or len(rows) != n:
        raise ConfigError(f"malformed field file: {path}")
    grid = core.make_grid(L, n)
    arr = np.asarray(rows)
    return core.Field(grid, arr[:, 1] + 1j * arr[:, 2])


def _write_csv(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                              for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class _Timer:
    def __init__(self):
        self.marks = {}
        self._t0 = time.perf_counter()

    def mark(self, name):
        now = time.perf_counter()
        self.marks[name] = round(now - self._t0, 3)
        self._t0 = now


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_stft(cfg, outdir, timer):
    import numpy as np

    from . import conventions, core, svgplot, tfa

    grid = cfg.grid()
    win = cfg.window(grid)
    f = cfg.field(grid)
    V = tfa.stft(f, win)
    timer.mark("stft")
    mag = np.abs(V.values)
    mass = (
        V.cell_area() * float(np.sum(mag**2)) * conventions.INV_FOURIER_CONST
    )
    jmax, kmax = np.unravel_index(np.argmax(mag), mag.shape)
    xmax = cfg.get("stft", "xmax", float, 8.0)
    wmax = cfg.get("stft", "ximax", float, 8.0)
    xi = _crop(V.x, xmax)
    wi = _crop(V.omega, wmax)
    sub = mag[np.ix_(xi, wi)]
    _write_csv(
        os.path.join(outdir, "stft.csv"),
        "x,omega,abs",
        [
            (float(V.x[j]), float(V.omega[k]), float(mag[j, k]))
            for j in xi
            for k in wi
        ],
    )
    svgplot.heatmap(
        os.path.join(outdir, "stft.svg"),
        [list(row) for row in sub.T],
        (float(V.x[xi[0]]), float(V.x[xi[-1]])),
        (float(V.omega[wi[0]]), float(V.omega[wi[-1]])),
        title="|V_g f|",
        xlabel="x",
        ylabel="omega",
    )
    timer.mark("artifacts")
    return {
        "max_abs": float(mag[jmax, kmax]),
        "argmax": [float(V.x[jmax]), float(V.omega[kmax])],
        "moyal_mass_ratio": mass / core.norm(f) ** 2,
    }


def _crop(vals, lim, maxn=256):
    import numpy as np

    idx = np.nonzero(np.abs(vals) <= lim)[0]
    if len(idx) == 0:
        raise ConfigError("crop window excludes every sample")
    stride = max(1, math.ceil(len(idx) / maxn))
    return idx[::stride]


def _cmd_norm(cfg, outdir, timer):
    import numpy as np

    from . import core, svgplot, tfa

    grid = cfg.grid()
    f = cfg.field(grid)
    out = {
        "l2": core.norm(f),
        "m1": tfa.modulation_norm(f, p=1.0),
        "m2": tfa.modulation_norm(f, p=2.0),
        "minf": tfa.modulation_norm(f, p=np.inf),
    }
    timer.mark("norms")
    _write_csv(
        os.path.join(outdir, "norms.csv"),
        "l2,m1,m2,minf",
        [(out["l2"], out["m1"], out["m2"], out["minf"])],
    )
    svgplot.line_plot(
        os.path.join(outdir, "field.svg"),
        [float(x) for x in grid.x],
        [[float(a) for a in np.abs(f.values)]],
        title="|f(x)|",
        xlabel="x",
    )
    timer.mark("artifacts")
    return out


def _cmd_gabor_matrix(cfg, outdir, timer):
    import numpy as np

    from . import svgplot, weyl

    grid = cfg.grid()
    win = cfg.window(grid)
    lattice = cfg.lattice()
    radius = cfg.get("matrix", "radius_cells", float, 8.0)
    M = weyl.gabor_matrix(cfg.symbol(grid), win, lattice, grid,
                          radius_cells=radius)
    timer.mark("assemble")
    profile = M.decay_profile()
    _write_csv(
        os.path.join(outdir, "matrix_decay.csv"),
        "cell_distance,max_abs",
        [(float(d), float(m)) for d, m in profile],
    )
    svgplot.decay_plot(
        os.path.join(outdir, "matrix_decay.svg"),
        [d for d, _ in profile],
        [[m for _, m in profile]],
        title="Gabor matrix decay",
        xlabel="cell distance",
        ylabel="max |M|",
    )
    logmag = np.log10(np.abs(M.entries) + 1e-16)
    svgplot.heatmap(
        os.path.join(outdir, "matrix.svg"),
        [list(row) for row in logmag],
        (0.0, float(logmag.shape[1])),
        (0.0, float(logmag.shape[0])),
        title="log10 |M(w, z)|",
        xlabel="z index",
        ylabel="w index",
    )
    timer.mark("artifacts")
    return {
        "size": int(M.entries.shape[0]),
        "radius_cells": radius,
        "min_column_band_fraction": M.min_column_band_fraction,
        "column_mass_outside_6_cells": M.column_mass_outside(6.0),
    }


def _cmd_envelope(cfg, outdir, timer):
    import numpy as np

    from . import core, reference, svgplot, tfa

    grid = cfg.grid()
    kappas = [
        float(t)
        for t in cfg.get("envelope", "kappas", str, "1.0, 1.5").split(",")
    ]
    exponents = {}
    curves = []
    omegas = None
    for kappa in kappas:
        exponents[f"{kappa:g}"] = reference.fractional_envelope_exponent(
            kappa, grid
        )
        _, cut = reference.fractional_symbol_split(kappa, grid)
        dual = grid.dual()
        fld = core.Field(dual, cut.samples.astype(np.complex128))
        dual_win = core.gaussian_window(dual, tau=np.pi * np.sqrt(2.0))
        omegas, prof = tfa.stft_sup_profile(fld, dual_win)
        curves.append(prof)
    timer.mark("fit")
    keep = np.abs(omegas) <= 40.0
    _write_csv(
        os.path.join(outdir, "envelope.csv"),
        "omega," + ",".join(f"kappa_{k:g}" for k in kappas),
        [
            tuple([float(omegas[i])] + [float(c[i]) for c in curves])
            for i in np.nonzero(keep)[0]
        ],
    )
    svgplot.decay_plot(
        os.path.join(outdir, "envelope.svg"),
        [float(w) for w in 1.0 + np.abs(omegas[keep])],
        [[float(max(v, 1e-16)) for v in c[keep]] for c in curves],
        labels=[f"kappa={k:g}" for k in kappas],
        title="cutoff-part envelope",
        xlabel="1 + |omega|",
        ylabel="sup-profile",
    )
    timer.mark("artifacts")
    return {"exponents": exponents,
            "floors": {f"{k:g}": k + 0.7 for k in kappas}}


def _cmd_flow(cfg, outdir, timer):
    import numpy as np

    from . import hamflow, svgplot

    grid = cfg.grid()
    symbol = cfg.symbol(grid)
    T, nsteps = cfg.times()
    spec = cfg.get("flow", "nodes", str, "1 0; 0 1; 1 1")
    nodes = [
        [float(p) for p in tok.split()]
        for tok in spec.split(";")
        if tok.strip()
    ]
    times = np.linspace(0.0, T, nsteps + 1)
    flow = hamflow.integrate_flow(
        symbol, nodes, times, substeps=cfg.get("time", "substeps", int, 4)
    )
    timer.mark("integrate")
    rows = []
    for k, t in enumerate(times):
        for i in range(len(nodes)):
            rows.append(
                (
                    float(t),
                    i,
                    float(flow.traj[k, i, 0]),
                    float(flow.traj[k, i, 1]),
                    float(flow.action[k, i]),
                )
            )
    _write_csv(os.path.join(outdir, "flow.csv"), "t,node,x,xi,psi", rows)
    svgplot.curves_plot(
        os.path.join(outdir, "flow.svg"),
        [
            (flow.traj[:, i, 0], flow.traj[:, i, 1])
            for i in range(len(nodes))
        ],
        labels=[f"node {i}" for i in range(len(nodes))],
        title="phase-plane trajectories",
        xlabel="x",
        ylabel="xi",
    )
    timer.mark("artifacts")
    return {
        "nodes": len(nodes),
        "final": [[float(a) for a in flow.final[i]] for i in range(len(nodes))],
        "final_action": [float(a) for a in flow.final_action],
    }


def _oracle_steps(cfg):
    return cfg.get("oracle", "steps", int, 4096)


def _cmd_propagate(cfg, outdir, timer, threads=1):
    import numpy as np

    from . import core, parametrix, reference, svgplot, tfa

    grid = cfg.grid()
    symbol = cfg.symbol(grid)
    u0 = cfg.field(grid)
    T, _ = cfg.times()
    plan = cfg.plan(symbol, grid, threads)
    timer.mark("plan")
    sol = parametrix.volterra_solve(plan, u0)
    timer.mark("volterra")
    fields, _ = parametrix.propagate_all(plan, u0, solution=sol)
    uT = fields[-1]
    timer.mark("propagate")
    oracle = reference.split_step(
        u0, reference.SplitStepConfig.from_symbol(symbol, grid, T,
                                                  _oracle_steps(cfg))
    )
    rel = core.norm(core.Field(grid, uT.values - oracle.values)) / core.norm(
        oracle
    )
    timer.mark("oracle")
    write_field(os.path.join(outdir, "u_T.field"), uT)
    _write_csv(
        os.path.join(outdir, "norms.csv"),
        "t,l2",
        [(float(t), core.norm(f)) for t, f in zip(plan.times, fields)],
    )
    if len(sol.ratios):
        svgplot.decay_plot(
            os.path.join(outdir, "picard.svg"),
            list(range(1, len(sol.ratios) + 1)),
            [[float(r) for r in sol.ratios]],
            title="Picard contraction ratios",
            xlabel="sweep",
            ylabel="ratio",
        )
    svgplot.line_plot(
        os.path.join(outdir, "solution.svg"),
        [float(x) for x in grid.x],
        [
            [float(v) for v in np.abs(uT.values)],
            [float(v) for v in np.abs(oracle.values)],
        ],
        labels=["parametrix", "reference"],
        title=f"|u(T)| at T = {T:g}",
        xlabel="x",
    )
    timer.mark("artifacts")
    return {
        "l2_rel_err_vs_reference": rel,
        "iterations": sol.iterations,
        "picard_ratio_first": float(sol.ratios[0]) if len(sol.ratios) else 0.0,
        "picard_ratio_gmean": sol.ratio,
        "volterra_residual": sol.residual,
        "frame_error": plan.frame_error,
        "unitarity_drift": abs(core.norm(uT) / core.norm(u0) - 1.0),
        "m1_final": tfa.modulation_norm(uT, p=1.0),
    }


def _cmd_compare(cfg, outdir, timer, threads=1):
    import numpy as np

    from . import core, parametrix, reference, svgplot

    grid = cfg.grid()
    symbol = cfg.symbol(grid)
    u0 = cfg.field(grid)
    T, nsteps = cfg.times()
    plan = cfg.plan(symbol, grid, threads)
    sol = parametrix.volterra_solve(plan, u0)
    fields, _ = parametrix.propagate_all(plan, u0, solution=sol)
    timer.mark("parametrix")
    per = max(1, _oracle_steps(cfg) // nsteps)
    knot_cfg = reference.SplitStepConfig.from_symbol(
        symbol, grid, T / nsteps, per
    )
    ref = u0
    errs = [0.0]
    for k in range(1, nsteps + 1):
        ref = reference.split_step(ref, knot_cfg)
        errs.append(
            core.norm(core.Field(grid, fields[k].values - ref.values))
            / core.norm(ref)
        )
    timer.mark("oracle")
    _write_csv(
        os.path.join(outdir, "compare.csv"),
        "t,l2_rel_err",
        [(float(t), float(e)) for t, e in zip(plan.times, errs)],
    )
    svgplot.decay_plot(
        os.path.join(outdir, "compare.svg"),
        [float(t) for t in plan.times[1:]],
        [[float(e) for e in errs[1:]]],
        title="parametrix vs split-step",
        xlabel="t",
        ylabel="rel. L2 error",
    )
    timer.mark("artifacts")
    return {
        "l2_rel_err_vs_reference": float(errs[-1]),
        "max_rel_err": float(np.max(errs)),
        "iterations": sol.iterations,
    }


def _cmd_nls(cfg, outdir, timer):
    import numpy as np

    from . import core, nonlinear, reference, svgplot

    grid = cfg.grid()
    symbol = cfg.symbol(grid)
    u0 = cfg.field(grid)
    coupling = cfg.get("nls", "coupling", float, 1.0)
    T0 = cfg.get("nls", "t0", float, 0.1)
    nsteps = cfg.get("nls", "nsteps", int, 16)
    steps = cfg.get("nls", "steps", int, 64)
    tol = cfg.tol_override or cfg.get("nls", "tol", float, 1e-8)
    F = nonlinear.AnalyticNonlinearity.cubic(coupling)
    lin = reference.SplitStepConfig.from_symbol(symbol, grid, T0, steps)
    sol = nonlinear.duhamel_picard(u0, F, lin, T0, tol=tol, nsteps=nsteps)
    timer.mark("duhamel")
    oracle = reference.split_step(
        u0,
        reference.SplitStepConfig.from_symbol(symbol, grid, T0,
                                              _oracle_steps(cfg)),
        coupling=coupling,
    )
    uT = sol.fields[-1]
    rel = core.norm(core.Field(grid, uT.values - oracle.values)) / core.norm(
        oracle
    )
    timer.mark("oracle")
    write_field(os.path.join(outdir, "u_T0.field"), uT)
    if len(sol.ratios):
        svgplot.decay_plot(
            os.path.join(outdir, "sweeps.svg"),
            list(range(1, len(sol.ratios) + 1)),
            [[float(r) for r in sol.ratios]],
            title="Duhamel sweep ratios",
            xlabel="sweep",
            ylabel="ratio",
        )
    timer.mark("artifacts")
    return {
        "iterations": sol.iterations,
        "max_ratio": float(np.max(sol.ratios)) if len(sol.ratios) else 0.0,
        "duhamel_residual": sol.residual,
        "l2_rel_err_vs_reference": rel,
        "mass_drift": abs(core.norm(uT) - core.norm(u0)),
    }


def _cmd_accept(cfg, outdir, timer):
    from . import acceptance

    results = []
    all_ok = True
    for res in acceptance.run_all():
        results.append(res)
        all_ok = all_ok and res["passed"]
        state = "PASS" if res["passed"] else "FAIL"
        print(f"{state}  {res['index']:>2}  {res['name']}: {res['summary']}")
        timer.mark(f"criterion_{res['index']}")
    payload = {
        "all_passed": all_ok,
        "criteria": [
            {k: v for k, v in r.items() if k != "runtime_s"} for r in results
        ],
    }
    if not all_ok:
        raise AcceptanceFailure(payload)
    return payload


class AcceptanceFailure(RuntimeError):
    def __init__(self, payload):
        super().__init__("acceptance criteria failed")
        self.payload = payload


_COMMANDS = {
    "stft": _cmd_stft,
    "norm": _cmd_norm,
    "gabor-matrix": _cmd_gabor_matrix,
    "envelope": _cmd_envelope,
    "flow": _cmd_flow,
    "propagate": _cmd_propagate,
    "compare": _cmd_compare,
    "nls": _cmd_nls,
    "accept": _cmd_accept,
}


def _parse(argv):
    ap = argparse.ArgumentParser(
        prog="gaborprop",
        description="phase-space propagation experiments",
    )
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", help="INI config path")
    ap.add_argument("--out", help="output directory (overrides config)")
    ap.add_argument("--threads", type=int, help="worker cap "
                    "(default: GABORPROP_THREADS or 1)")
    ap.add_argument("--seed", type=int, help="corpus seed override")
    ap.add_argument("--tol", type=float, help="solver tolerance override")
    return ap.parse_args(argv)


def _emit_error(outdir, command, exc, code):
    doc = {
        "error": {"type": type(exc).__name__, "message": str(exc)},
        "subcommand": command,
        "exit_code": code,
    }
    text = json.dumps(doc, sort_keys=True)
    print(text, file=sys.stderr)
    if outdir and os.path.isdir(outdir):
        with open(os.path.join(outdir, "error.json"), "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return code


def main(argv=None):
    args = _parse(argv)
    threads = args.threads
    if threads is None:
        raw = os.environ.get("GABORPROP_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError:
            print(
                json.dumps({"error": {"type": "ConfigError",
                                      "message": f"bad GABORPROP_THREADS={raw!r}"}}),
                file=sys.stderr,
            )
            return _EXIT_VALIDATION
    if threads < 1:
        print(
            json.dumps({"error": {"type": "ConfigError",
                                  "message": "threads must be >= 1"}}),
            file=sys.stderr,
        )
        return _EXIT_VALIDATION
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))

    cfg = None
    outdir = args.out or "gaborprop-out"
    try:
        if args.command != "accept" or args.config:
            if not args.config:
                raise ConfigError("--config is required")
            cfg = RunConfig(args.config, args)
            outdir = cfg.outdir
        os.makedirs(outdir, exist_ok=True)
    except ConfigError as exc:
        return _emit_error(None, args.command, exc, _EXIT_VALIDATION)

    from .conventions import LEDGER_VERSION

    timer = _Timer()
    wall0 = time.perf_counter()
    try:
        handler = _COMMANDS[args.command]
        if args.command in ("propagate", "compare"):
            payload = handler(cfg, outdir, timer, threads=threads)
        else:
            payload = handler(cfg, outdir, timer)
    except AcceptanceFailure as exc:
        _write_report(outdir, args, cfg, exc.payload, LEDGER_VERSION)
        _write_timings(outdir, timer, threads, wall0)
        return _emit_error(outdir, args.command, exc, _EXIT_NUMERICAL)
    except ConfigError as exc:
        return _emit_error(outdir, args.command, exc, _EXIT_VALIDATION)
    except Exception as exc:
        code = _classify(exc)
        if code is None:
            raise
        return _emit_error(outdir, args.command, exc, code)

    _write_report(outdir, args, cfg, payload, LEDGER_VERSION)
    _write_timings(outdir, timer, threads, wall0)
    print(f"{args.command}: report in {outdir} "
          f"({time.perf_counter() - wall0:.1f}s)")
    return 0


def _classify(exc):
    from . import hamflow, nonlinear, parametrix

    numerical = (
        parametrix.VolterraError,
        parametrix.TruncationError,
        hamflow.BoxExitError,
        nonlinear.NonlinearError,
    )
    if isinstance(exc, numerical):
        return _EXIT_NUMERICAL
    if isinstance(exc, (ValueError, KeyError, OSError)):
        return _EXIT_VALIDATION
    return None


def _write_report(outdir, args, cfg, payload, ledger_version):
    from . import __version__

    report = {
        "subcommand": args.command,
        "config_hash": cfg.hash if cfg else None,
        "ledger_version": ledger_version,
        "version": __version__,
        "seed": cfg.seed if cfg else args.seed,
        "results": _jsonable(payload),
    }
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")


def _write_timings(outdir, timer, threads, wall0):
    doc = {
        "threads": threads,
        "wall_s": round(time.perf_counter() - wall0, 3),
        "phases_s": timer.marks,
    }
    with open(os.path.join(outdir, "timings.json"), "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


if __name__ == "__main__":
    sys.exit(main())
