"""Step-sign plots: locations and jump signs of a selected model, nothing else.

The plot draws a horizontal segment at ``+1`` or ``-1`` for each detected
location and a dashed vertical marker at the location itself.  No fitted
values enter the drawing, so showing it before testing leaks nothing about
the data beyond the selection event.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

from .contrasts import StepSignModel


def step_sign_text(model: StepSignModel) -> str:
    lines = ["location\tsign"]
    lines += [f"{loc}\t{s:+d}" for loc, s in model.items()]
    return "\n".join(lines) + "\n"


def step_sign_ascii(model: StepSignModel, width: int = 72) -> str:
    """Three-row terminal rendering: ``+`` above, ``-`` below, ``|`` at locations."""
    if width < 10:
        raise ValueError("width must be at least 10")
    span = max(model.n - 1, 1)
    top, mid, bot = [" "] * width, ["."] * width, [" "] * width
    for loc, s in model.items():
        col = min(width - 1, round((loc - 1) / span * (width - 1)))
        mid[col] = "|"
        (top if s > 0 else bot)[col] = "+" if s > 0 else "-"
    axis = f"1{' ' * (width - 1 - len(str(model.n)))}{model.n}"
    return "\n".join("".join(r) for r in (top, mid, bot)) + "\n" + axis + "\n"


def step_sign_svg(model: StepSignModel, width: int = 640, height: int = 200, title: str | None = None) -> str:
    pad = 30
    inner_w, inner_h = width - 2 * pad, height - 2 * pad
    span = max(model.n - 1, 1)

    def x(loc):
        return pad + (loc - 1) / span * inner_w

    def y(level):
        return pad + (1 - level) / 2 * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{pad}" y1="{y(0):.2f}" x2="{width - pad}" y2="{y(0):.2f}" stroke="#999" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{pad}" y="{pad / 2:.0f}" font-size="12">{escape(title)}</text>')
    half = inner_w / span / 2 if span else 1.0
    seg = max(half, 4.0)
    for loc, s in model.items():
        xl = x(loc)
        parts.append(
            f'<line x1="{xl:.2f}" y1="{pad}" x2="{xl:.2f}" y2="{height - pad}" stroke="#555" stroke-dasharray="4,3"/>'
        )
        parts.append(
            f'<line x1="{xl - seg:.2f}" y1="{y(s):.2f}" x2="{xl + seg:.2f}" y2="{y(s):.2f}" '
            f'stroke="{"#1f77b4" if s > 0 else "#d62728"}" stroke-width="3"/>'
        )
        parts.append(f'<text x="{xl:.2f}" y="{height - pad / 3:.0f}" font-size="10" text-anchor="middle">{loc}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
