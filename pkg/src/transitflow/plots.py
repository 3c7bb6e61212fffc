"""Minimal self-contained SVG charts for pipeline reports."""

from xml.sax.saxutils import escape

COLORS = ("#d62728", "#222222", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")
W, H = 640, 400
L, R, T, B = 60, 160, 30, 50


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi):
    sx = _scale(xlo, xhi, L, W - R)
    sy = _scale(ylo, yhi, H - B, T)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
        f'<text x="{(L + W - R) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{(T + H - B) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(T + H - B) / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for i in range(6):
        xv = xlo + (xhi - xlo) * i / 5
        yv = ylo + (yhi - ylo) * i / 5
        out.append(f'<text x="{sx(xv):.1f}" y="{H - B + 15}" text-anchor="middle">{xv:g}</text>')
        out.append(f'<text x="{L - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    return out, sx, sy


def _legend(out, names):
    for i, name in enumerate(names):
        y = T + 10 + 16 * i
        c = COLORS[i % len(COLORS)]
        out.append(f'<rect x="{W - R + 12}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{W - R + 28}" y="{y + 1}">{escape(name)}</text>')


def line_chart(x, series, title="", xlabel="", ylabel=""):
    """``series`` maps a legend name to y values aligned with ``x``."""
    ys = [v for vals in series.values() for v in vals if v is not None]
    yhi = max(ys + [1.0])
    out, sx, sy = _frame(title, xlabel, ylabel, min(x), max(x), 0.0, yhi)
    for i, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x, vals) if b is not None)
        dash = ' stroke-dasharray="5,3"' if i >= 2 else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{COLORS[i % len(COLORS)]}" '
                   f'stroke-width="1.6"{dash}/>')
    _legend(out, list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_chart(groups, title="", xlabel="truth", ylabel="estimate"):
    """``groups`` maps a legend name to ``(truth, estimate)`` sequences; draws the diagonal."""
    vals = [v for a, b in groups.values() for v in list(a) + list(b)]
    hi = max(vals + [1.0])
    out, sx, sy = _frame(title, xlabel, ylabel, 0.0, hi, 0.0, hi)
    out.append(f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(hi):.1f}" y2="{sy(hi):.1f}" '
               'stroke="#999999" stroke-dasharray="4,3"/>')
    for i, (name, (a, b)) in enumerate(groups.items()):
        c = COLORS[i % len(COLORS)]
        for u, v in zip(a, b):
            out.append(f'<circle cx="{sx(u):.1f}" cy="{sy(v):.1f}" r="3" fill="{c}" fill-opacity="0.7"/>')
    _legend(out, list(groups))
    out.append("</svg>")
    return "\n".join(out) + "\n"
