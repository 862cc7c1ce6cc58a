"""Minimal native SVG rendering: line plots, log-decay plots, heatmaps.

Every coordinate and color is formatted through fixed-width printf-style
conversions so a plot's bytes depend only on the data handed in. No numpy
here; callers pass plain sequences.
"""

import math

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 34, 46

_PALETTE = [
    (13, 8, 84),
    (84, 2, 163),
    (156, 23, 158),
    (219, 92, 104),
    (249, 164, 63),
    (240, 249, 33),
]

_SERIES_COLORS = ["#1f5fa8", "#c03a2b", "#2e8b57", "#8a2be2", "#b8860b"]


def _fmt(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, target=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _tick_label(v):
    if v == 0.0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.6g}"


def _color(v):
    v = min(max(v, 0.0), 1.0)
    pos = v * (len(_PALETTE) - 1)
    i = min(int(pos), len(_PALETTE) - 2)
    f = pos - i
    r, g, b = (
        round(a + f * (b2 - a))
        for a, b2 in zip(_PALETTE[i], _PALETTE[i + 1])
    )
    return f"#{r:02x}{g:02x}{b:02x}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
            f'height="{_H}" viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
        ]
        if title:
            self.text(_W / 2, 20, title, anchor="middle", size=14)
        if xlabel:
            self.text(_ML + (_W - _ML - _MR) / 2, _H - 10, xlabel,
                      anchor="middle")
        if ylabel:
            x, y = 16, _MT + (_H - _MT - _MB) / 2
            self.parts.append(
                f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="12" '
                f'font-family="sans-serif" text-anchor="middle" '
                f'transform="rotate(-90 {_fmt(x)} {_fmt(y)})">{ylabel}</text>'
            )

    def text(self, x, y, s, anchor="start", size=12):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>'
        )

    def line(self, x1, y1, x2, y2, color="#888888", width=1.0):
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
            f'y2="{_fmt(y2)}" stroke="{color}" stroke-width="{width}"/>'
        )

    def polyline(self, pts, color, width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>'
        )

    def rect(self, x, y, w, h, fill):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{fill}"/>'
        )

    def save(self, path):
        self.parts.append("</svg>")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(self.parts) + "\n")
        return path


class _Axes:
    """Data-to-pixel mapping over the plot rectangle, optionally log-y."""

    def __init__(self, xlo, xhi, ylo, yhi, logy=False):
        if logy:
            ylo, yhi = math.log10(ylo), math.log10(yhi)
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.logy = logy

    def px(self, x):
        f = (x - self.xlo) / (self.xhi - self.xlo)
        return _ML + f * (_W - _ML - _MR)

    def py(self, y):
        if self.logy:
            y = math.log10(max(y, 10.0 ** self.ylo))
        f = (y - self.ylo) / (self.yhi - self.ylo)
        return _H - _MB - f * (_H - _MT - _MB)

    def draw_frame(self, cv):
        cv.line(_ML, _MT, _ML, _H - _MB, "#222222")
        cv.line(_ML, _H - _MB, _W - _MR, _H - _MB, "#222222")
        for t in _nice_ticks(self.xlo, self.xhi):
            x = self.px(t)
            cv.line(x, _H - _MB, x, _H - _MB + 4, "#222222")
            cv.text(x, _H - _MB + 17, _tick_label(t), anchor="middle", size=10)
        if self.logy:
            lo, hi = math.floor(self.ylo), math.ceil(self.yhi)
            ticks = [e for e in range(int(lo), int(hi) + 1)]
            for e in ticks:
                if e < self.ylo - 1e-9 or e > self.yhi + 1e-9:
                    continue
                y = _H - _MB - (e - self.ylo) / (self.yhi - self.ylo) * (
                    _H - _MT - _MB
                )
                cv.line(_ML - 4, y, _ML, y, "#222222")
                cv.text(_ML - 7, y + 4, f"1e{e}", anchor="end", size=10)
        else:
            for t in _nice_ticks(self.ylo, self.yhi):
                y = self.py(t)
                cv.line(_ML - 4, y, _ML, y, "#222222")
                cv.text(_ML - 7, y + 4, _tick_label(t), anchor="end", size=10)


def line_plot(path, xs, series, labels=None, title="", xlabel="", ylabel="",
              logy=False):
    """One or more y-series over shared x values; logy clips at the
    smallest positive sample."""
    series = [list(map(float, ys)) for ys in series]
    xs = list(map(float, xs))
    flat = [y for ys in series for y in ys if math.isfinite(y)]
    if logy:
        flat = [y for y in flat if y > 0.0]
        if not flat:
            flat = [1e-16, 1.0]
    ylo, yhi = min(flat), max(flat)
    if not logy:
        pad = 0.05 * (yhi - ylo) if yhi > ylo else 1.0
        ylo, yhi = ylo - pad, yhi + pad
    ax = _Axes(min(xs), max(xs), ylo, yhi, logy=logy)
    cv = _Canvas(title, xlabel, ylabel)
    ax.draw_frame(cv)
    for i, ys in enumerate(series):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        pts = [
            (ax.px(x), ax.py(y))
            for x, y in zip(xs, ys)
            if math.isfinite(y) and (not logy or y > 0.0)
        ]
        if pts:
            cv.polyline(pts, color)
        if labels and i < len(labels):
            cv.text(_W - _MR - 6, _MT + 16 + 16 * i, labels[i], anchor="end")
            cv.line(_W - _MR - 90, _MT + 12 + 16 * i, _W - _MR - 70,
                    _MT + 12 + 16 * i, color, 2.0)
    return cv.save(path)


def decay_plot(path, xs, series, labels=None, title="", xlabel="",
               ylabel=""):
    """Log-scale decay plot; a thin wrapper kept for intent at call sites."""
    return line_plot(path, xs, series, labels=labels, title=title,
                     xlabel=xlabel, ylabel=ylabel, logy=True)


def curves_plot(path, curves, labels=None, title="", xlabel="", ylabel=""):
    """Independent (xs, ys) polylines in one frame; for trajectories."""
    curves = [
        (list(map(float, xs)), list(map(float, ys))) for xs, ys in curves
    ]
    allx = [x for xs, _ in curves for x in xs]
    ally = [y for _, ys in curves for y in ys]
    padx = 0.05 * (max(allx) - min(allx)) or 1.0
    pady = 0.05 * (max(ally) - min(ally)) or 1.0
    ax = _Axes(min(allx) - padx, max(allx) + padx,
               min(ally) - pady, max(ally) + pady)
    cv = _Canvas(title, xlabel, ylabel)
    ax.draw_frame(cv)
    for i, (xs, ys) in enumerate(curves):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        cv.polyline([(ax.px(x), ax.py(y)) for x, y in zip(xs, ys)], color)
        if labels and i < len(labels):
            cv.text(_W - _MR - 6, _MT + 16 + 16 * i, labels[i], anchor="end")
            cv.line(_W - _MR - 90, _MT + 12 + 16 * i, _W - _MR - 70,
                    _MT + 12 + 16 * i, color, 2.0)
    return cv.save(path)


def heatmap(path, rows, xext, yext, title="", xlabel="", ylabel="",
            max_cells=160):
    """Magnitude heatmap of `rows` (a list of equal-length rows, row 0 at
    the bottom). Large arrays are block-averaged down to `max_cells` per
    axis so the artifact stays a plain grid of rects.
    """
    ny = len(rows)
    nx = len(rows[0])
    sy = max(1, -(-ny // max_cells))
    sx = max(1, -(-nx // max_cells))
    pooled = []
    for j0 in range(0, ny, sy):
        row = []
        for i0 in range(0, nx, sx):
            block = [
                rows[j][i]
                for j in range(j0, min(j0 + sy, ny))
                for i in range(i0, min(i0 + sx, nx))
            ]
            row.append(sum(block) / len(block))
        pooled.append(row)
    flat = [v for row in pooled for v in row]
    vlo, vhi = min(flat), max(flat)
    span = vhi - vlo if vhi > vlo else 1.0
    ax = _Axes(xext[0], xext[1], yext[0], yext[1])
    cv = _Canvas(title, xlabel, ylabel)
    npy, npx = len(pooled), len(pooled[0])
    cw = (_W - _ML - _MR) / npx
    ch = (_H - _MT - _MB) / npy
    for j, row in enumerate(pooled):
        y = _H - _MB - (j + 1) * ch
        for i, v in enumerate(row):
            cv.rect(_ML + i * cw, y, cw + 0.5, ch + 0.5,
                    _color((v - vlo) / span))
    ax.draw_frame(cv)
    return cv.save(path)
