"""Delimited-table output and figure rendering for experiment results.

Data files are plain comma-separated text with '#'-prefixed comment lines for
the resolved configuration (top) and the run summary (bottom), so any external
tool can plot them.  Figures are rendered to PNG next to the data file.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence, Tuple

__all__ = ["format_value", "render_distance_figure", "write_delimited"]


def format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_delimited(
    path,
    columns: "Mapping[str, Sequence]",
    header_lines: Iterable[str] = (),
    summary_lines: Iterable[str] = (),
) -> None:
    """Write columns as comma-separated text with comment header and summary."""
    names = list(columns)
    length = len(columns[names[0]])
    for name in names:
        if len(columns[name]) != length:
            raise ValueError(f"column {name!r} has mismatched length")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for i in range(length):
            fh.write(",".join(format_value(columns[n][i]) for n in names) + "\n")
        for line in summary_lines:
            fh.write(f"# {line}\n")


def render_distance_figure(
    path,
    curves: "Sequence[Tuple[str, Sequence, Sequence]]",
    title: str,
    band: "Tuple[Sequence, Sequence, Sequence] | None" = None,
) -> None:
    """Render coupled-distance curves on a log scale to ``path``.

    ``curves`` holds (label, iterations, distances) triples; zero distances are
    masked out of the log plot.  ``band`` optionally shades a (iters, lo, hi)
    min/max envelope.
    """
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    if band is not None:
        b_it, b_lo, b_hi = band
        ax.fill_between(b_it, b_lo, b_hi, alpha=0.2, lw=0, label="min/max")
    for label, iters, dists in curves:
        pts = [(k, d) for k, d in zip(iters, dists) if d > 0.0]
        if not pts:
            continue
        ax.semilogy([k for k, _ in pts], [d for _, d in pts], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("coupled L2 distance")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
