"""Episode-report persistence and training-curve figures.

Reports are serialized as JSON-lines, one episode per line, plus a flat
CSV for spreadsheet consumption. The figure renderer draws the coverage,
branch-accuracy and loss curves next to those files. Rendering is
deterministic: fixed size, fixed dpi, no timestamps in the output.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .engine import EpisodeReport

FIG_DPI = 120


def write_reports(reports: list[EpisodeReport], path: str) -> None:
    with open(path, "w") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")


def read_reports(path: str) -> list[EpisodeReport]:
    reports = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                reports.append(EpisodeReport.from_dict(json.loads(line)))
    return reports


def write_episode_csv(reports: list[EpisodeReport], path: str) -> None:
    """Flat per-episode table with empty cells for absent optional fields."""
    cols = [
        "episode",
        "coverage",
        "loss_mean",
        "pseudolabel_accuracy",
        "adaptation_accuracy",
        "pretrained_accuracy",
        "resolved_zs_temperature",
    ]
    lines = [",".join(cols)]
    for rep in reports:
        d = rep.to_dict()
        lines.append(",".join("" if d.get(c) is None else repr(d[c]) for c in cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _new_axes(title: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.set_title(title)
    ax.set_xlabel("episode")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def render_training_curves(reports: list[EpisodeReport], out_dir: str) -> list[str]:
    """Write training-curve PNGs into ``out_dir``; returns the file paths."""
    episodes = [r.episode for r in reports]
    created = []

    fig, ax = _new_axes("Pseudolabel coverage", "proportion labeled")
    ax.plot(episodes, [r.coverage for r in reports], marker="o", color="tab:blue")
    ax.set_ylim(0.0, 1.05)
    path = f"{out_dir}/coverage_curve.png"
    _save(fig, path)
    created.append(path)

    with_acc = [r for r in reports if r.branch_accuracies is not None]
    if with_acc:
        fig, ax = _new_axes("Branch accuracies", "accuracy")
        ax.plot(
            [r.episode for r in with_acc],
            [r.branch_accuracies[0] for r in with_acc],
            marker="o",
            color="tab:orange",
            label="adaptation branch",
        )
        ax.plot(
            [r.episode for r in with_acc],
            [r.branch_accuracies[1] for r in with_acc],
            marker="s",
            color="tab:green",
            label="pre-trained branch",
        )
        pl_acc = [r for r in with_acc if r.pseudolabel_accuracy is not None]
        if pl_acc:
            ax.plot(
                [r.episode for r in pl_acc],
                [r.pseudolabel_accuracy for r in pl_acc],
                linestyle="--",
                color="tab:gray",
                label="pseudolabel accuracy",
            )
        ax.legend(fontsize=8)
        path = f"{out_dir}/accuracy_curve.png"
        _save(fig, path)
        created.append(path)

    fig, ax = _new_axes("Co-learning loss", "mean batch loss")
    ax.plot(episodes, [r.loss_mean for r in reports], marker="o", color="tab:red")
    path = f"{out_dir}/loss_curve.png"
    _save(fig, path)
    created.append(path)
    return created
