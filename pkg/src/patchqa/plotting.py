"""Figures written next to the CSV reports.

PNG metadata is pinned so repeated runs give byte-identical images.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PNG_METADATA = {"Software": None}

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 100,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def scatter_report(reports, path, title=None):
    """Predicted q_pc against MOS, one marker series per report."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        lo, hi = np.inf, -np.inf
        for report, marker in zip(reports, "os^v"):
            mos = np.array([r.mos for r in report.records])
            pred = np.array([r.q_pc for r in report.records])
            lo, hi = min(lo, mos.min(), pred.min()), max(hi, mos.max(), pred.max())
            ax.scatter(mos, pred, s=14, marker=marker, alpha=0.7,
                       label=f"{report.pooling}  srcc {report.srcc:.3f}  plcc {report.plcc:.3f}")
        ax.plot([lo, hi], [lo, hi], color="0.6", lw=0.8, ls="--")
        ax.set_xlabel("MOS")
        ax.set_ylabel("predicted quality")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=7, loc="upper left")
        fig.tight_layout()
        return _save(fig, path)


def loss_curves(histories, path):
    """Per-epoch training loss; ``histories`` maps a label to a list of losses."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(histories), figsize=(3.6 * len(histories), 3.0),
                                 squeeze=False)
        for ax, (label, losses) in zip(axes[0], histories.items()):
            ax.plot(np.arange(1, len(losses) + 1), losses, marker=".", lw=1)
            ax.set_xlabel("epoch")
            ax.set_ylabel("loss")
            ax.set_title(label)
        fig.tight_layout()
        return _save(fig, path)


def patch_weights(record, path):
    """Bar chart of one cloud's patch scores, shaded by pooling weight."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        idx = np.arange(len(record.q_patch))
        w = np.asarray(record.w_patch, dtype=float)
        shade = w / w.max() if w.max() > 0 else np.ones_like(w)
        ax.bar(idx, record.q_patch, color=plt.cm.viridis(shade))
        ax.axhline(record.q_pc, color="k", lw=0.8, label=f"q_pc {record.q_pc:.2f}")
        ax.set_xlabel("patch")
        ax.set_ylabel("q_patch")
        ax.set_title(record.name)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
