"""Deterministic SVG line charts (matplotlib, Agg backend)."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["line_chart_svg"]

_RC = {
    "svg.hashsalt": "dcmom",
    "svg.fonttype": "none",
    "font.family": "sans-serif",
}


def line_chart_svg(curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], path,
                   *, title: str = "", ylabel: str = "", logy: bool = True) -> None:
    """Write one line per ``label -> (t, y)`` to ``path``.

    Output is byte-stable: no creation date, fixed element ids, text kept as
    text so no glyphs are embedded.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for label, (t, y) in curves.items():
            y = np.asarray(y, dtype=np.float64)
            if logy:
                y = np.where(y > 0, y, np.nan)
            ax.plot(np.asarray(t), y, label=label, linewidth=1.4)
        if logy and any(np.any(np.asarray(y) > 0) for _, y in curves.values()):
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if curves:
            ax.legend(fontsize=8)
        ax.grid(True, which="major", alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
