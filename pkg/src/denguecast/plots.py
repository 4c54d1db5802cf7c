"""Per-area SVG of predicted (lines) and observed (points) relative risk."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLES = {"GAM": dict(linestyle=":", color="tab:blue"), "RF": dict(linestyle="-", color="tab:red")}


def prediction_svg(area: str, records) -> str:
    """SVG text; deterministic for identical inputs (fixed id salt, no date stamp)."""
    with plt.rc_context({"svg.hashsalt": "denguecast", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        observed_drawn = False
        for r in records:
            x = list(range(1, len(r.weeks) + 1))
            if not observed_drawn:
                ax.plot(x, r.observed, "o", color="black", markersize=3, label="observed")
                observed_drawn = True
            ax.plot(x, r.predicted, label=r.model, **STYLES.get(r.model, {}))
        if records:
            ax.set_xlabel(f"week of test period (from {records[0].weeks[0]})")
        ax.set_ylabel("relative risk")
        ax.set_title(area)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
