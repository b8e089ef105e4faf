"""Figure rendering for monitor sessions and benchmark runs.

Figures are written next to the delimited outputs (metrics.csv,
decisions.csv) so a session directory is self-describing. Rendering is
headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EVENT_COLORS = {
    "retrain_triggered": "tab:orange",
    "retrain_completed": "tab:green",
    "model_promoted": "tab:blue",
    "retrain_failed": "tab:red",
}


def render_monitor_figure(result, path: Path | str) -> Path:
    """Drift score, accuracy, and posterior over batches with event markers."""
    samples = result.samples
    batches = [s.batch_index for s in samples]
    drift = [s.drift_score for s in samples]
    acc = [(s.batch_index, s.accuracy) for s in samples if s.accuracy is not None]
    post = [(s.batch_index, s.posterior) for s in samples if s.posterior is not None]

    n_rows = 1 + (1 if acc else 0) + (1 if post else 0)
    fig, axes = plt.subplots(n_rows, 1, figsize=(9, 2.6 * n_rows), sharex=True, squeeze=False)
    axes = [ax for row in axes for ax in row]

    ax = axes[0]
    ax.plot(batches, drift, marker=".", color="tab:purple", label="drift score (max PSI)")
    ax.axhline(0.25, color="gray", linestyle="--", linewidth=1, label="PSI threshold")
    ax.set_ylabel("drift score")
    ax.legend(loc="upper left", fontsize=8)

    row = 1
    if acc:
        ax = axes[row]
        ax.plot(*zip(*acc), marker=".", color="tab:green", label="batch accuracy")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="lower left", fontsize=8)
        row += 1
    if post:
        ax = axes[row]
        ax.plot(*zip(*post), marker=".", color="tab:red", label="retrain posterior")
        ax.axhline(0.7, color="gray", linestyle="--", linewidth=1, label="posterior threshold")
        ax.set_ylabel("posterior")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="upper left", fontsize=8)

    seen = set()
    for ev in result.events:
        color = EVENT_COLORS.get(ev.kind)
        if color is None:
            continue
        label = ev.kind if ev.kind not in seen else None
        seen.add(ev.kind)
        for ax in axes:
            ax.axvline(ev.batch_index, color=color, alpha=0.4, linewidth=1,
                       label=label if ax is axes[0] else None)
    if seen:
        axes[0].legend(loc="upper left", fontsize=8)

    axes[-1].set_xlabel("batch")
    fig.suptitle("monitor session")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_bench_figure(per_magnitude: dict, single: dict | None, path: Path | str) -> Path:
    """DDA vs shift magnitude, or per-batch drift scores for a single scenario.

    per_magnitude: {magnitude: mean dda}; single: one DdaResult dict with
    per-batch rows (used when there is no sweep).
    """
    fig, ax = plt.subplots(figsize=(7, 4))
    if per_magnitude:
        mags = sorted(per_magnitude)
        ax.plot(mags, [per_magnitude[m] for m in mags], marker="o", color="tab:blue")
        ax.set_xlabel("mean shift magnitude (reference sigma units)")
        ax.set_ylabel("mean DDA")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("drift detection accuracy vs shift magnitude")
        ax.grid(alpha=0.3)
    elif single is not None:
        rows = single["per_batch"]
        batches = [r["batch"] for r in rows]
        scores = [r["drift_score"] for r in rows]
        ax.plot(batches, scores, marker=".", color="tab:purple", label="drift score")
        ax.axhline(0.25, color="gray", linestyle="--", linewidth=1, label="PSI threshold")
        for r in rows:
            if r["truth"]:
                ax.axvspan(r["batch"] - 0.5, r["batch"] + 0.5, color="tab:red", alpha=0.08)
        ax.set_xlabel("batch")
        ax.set_ylabel("drift score (max PSI)")
        ax.set_title(f"scenario decisions (DDA {single['dda']:.3f})")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
