"""Learning-curve SVG charts: smoothed mean over seeds with a min-max band."""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from secure_lawn.harness import moving_average  # noqa: E402

SMOOTHING_WINDOW = 20
_SALT = "secure-lawn"


def curve_band(matrix, window: int = SMOOTHING_WINDOW) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-seed smoothing, then (mean, min, max) across seeds."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    smooth = np.array([moving_average(row, window) for row in matrix])
    return smooth.mean(axis=0), smooth.min(axis=0), smooth.max(axis=0)


def render_svg(
    series: Sequence[tuple[str, np.ndarray]],
    title: str = "Episode return",
    ylabel: str = "return",
    window: int = SMOOTHING_WINDOW,
) -> bytes:
    """One curve per ``(label, seeds x episodes matrix)``; legend follows input order.

    Output bytes are a pure function of the inputs: fixed hash salt, no date stamp.
    """
    if not series:
        raise ValueError("need at least one series")
    with matplotlib.rc_context({"svg.hashsalt": _SALT, "svg.fonttype": "none", "font.family": "DejaVu Sans"}):
        fig, ax = plt.subplots(figsize=(7, 4.2))
        try:
            for label, matrix in series:
                mean, lo, hi = curve_band(matrix, window)
                x = np.arange(len(mean))
                (line,) = ax.plot(x, mean, label=label, linewidth=1.6)
                ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.2, linewidth=0)
            ax.set_xlabel("episode")
            ax.set_ylabel(ylabel)
            ax.set_title(title)
            ax.grid(True, alpha=0.3)
            ax.legend(loc="lower right")
            fig.tight_layout()
            buf = io.BytesIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buf.getvalue()
