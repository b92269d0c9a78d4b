"""Space-time diagram rendering: portable graymap (P2) and ASCII grids."""
from __future__ import annotations

from .core import Trace


def gray_level(state: int, n: int) -> int:
    """Pixel value of a state: floor(255*s/(n-1)); single-state rules render
    black."""
    if n <= 1:
        return 0
    return (255 * state) // (n - 1)


def render_pgm(trace: Trace, n: int) -> str:
    """One pixel per cell per row, earliest row on top."""
    width = trace.rows[0].period
    height = len(trace.rows)
    lines = ["P2", f"{width} {height}", "255"]
    for row in trace.rows:
        lines.append(" ".join(str(gray_level(s, n)) for s in row.word))
    return "\n".join(lines) + "\n"


def render_ascii(trace: Trace, n: int) -> str:
    if n <= 10:
        return "\n".join("".join(str(s) for s in row.word)
                         for row in trace.rows) + "\n"
    return "\n".join(" ".join(str(s) for s in row.word)
                     for row in trace.rows) + "\n"
