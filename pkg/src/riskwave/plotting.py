"""SVG figures: Kaplan-Meier CDF step plot and ROC curve."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .survival import FIVE_YEARS_DAYS, km_eval_cdf

# fixed ids and no timestamp so identical inputs give identical files
STYLE = {
    "svg.hashsalt": "riskwave",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_km_curve(curve, path, horizon=FIVE_YEARS_DAYS, title=None):
    """Step plot of P(ST <= t) with the horizon marked in red."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        t = np.concatenate(([0.0], curve.event_times))
        p = np.concatenate(([0.0], curve.cdf))
        ax.step(t, p, where="post", color="k", lw=1.2)
        at = km_eval_cdf(curve, horizon)
        ax.plot([horizon], [at], "o", color="red", ms=5)
        ax.annotate(f"P(ST<={horizon:g}) = {at:.2f}", (horizon, at), xytext=(6, -12),
                    textcoords="offset points", fontsize=8)
        ax.set_xlabel("survival time (days)")
        ax.set_ylabel("P(ST <= t)")
        ax.set_ylim(0, 1.02)
        ax.set_xlim(left=0)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_roc(curve, path, operating_point=None, title=None):
    """ROC polyline; ``operating_point`` is (threshold, tpr, fpr)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.plot([0, 1], [0, 1], ls=":", color="0.6", lw=0.8)
        ax.plot(curve.fpr, curve.tpr, color="k", lw=1.2, label=f"AUC = {curve.auc:.3f}")
        if operating_point is not None:
            th, tpr, fpr = operating_point
            ax.plot([fpr], [tpr], "o", color="red", ms=5, label=f"Th = {th:g}")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate (low-risk)")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_aspect("equal")
        ax.legend(loc="lower right", frameon=False, fontsize=8)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
