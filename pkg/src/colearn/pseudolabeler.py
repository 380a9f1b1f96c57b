"""Pseudolabel construction from the two branches' probability matrices.

Five selection schemes plus the strong-guidance rule decide, per sample,
whether a pseudolabel is assigned, which branch supplies it, and with what
confidence. Confidence of a prediction is the max row probability;
predictions are argmax with lowest-index tie-breaking; confidence
comparisons against the threshold are strict (conf > gamma).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


class SchemeKind(str, enum.Enum):
    SELF_CONF = "SelfConf"
    OTHER_CONF = "OtherConf"
    MATCH = "Match"
    MATCH_OR_CONF = "MatchOrConf"
    MATCH_AND_CONF = "MatchAndConf"
    STRONG_GUIDANCE = "StrongGuidance"


class Provenance(enum.IntEnum):
    MATCH = 0
    ADAPTATION_BRANCH = 1
    PRETRAINED_BRANCH = 2


PROVENANCE_NAMES = {
    Provenance.MATCH: "Match",
    Provenance.ADAPTATION_BRANCH: "AdaptationBranch",
    Provenance.PRETRAINED_BRANCH: "PretrainedBranch",
}
PROVENANCE_BY_NAME = {v: k for k, v in PROVENANCE_NAMES.items()}


@dataclass(frozen=True)
class PseudolabelSet:
    """Selected samples with their assigned labels.

    Parallel arrays: ``indices`` are unique sample indices in ascending
    order, ``labels`` the assigned classes, ``confidences`` the assigning
    branch's probability of that class, ``provenances`` Provenance codes.
    """

    indices: np.ndarray
    labels: np.ndarray
    confidences: np.ndarray
    provenances: np.ndarray
    n_total: int

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def entries(self) -> list[tuple[int, int, float, Provenance]]:
        return [
            (int(i), int(l), float(c), Provenance(int(p)))
            for i, l, c, p in zip(
                self.indices, self.labels, self.confidences, self.provenances
            )
        ]


@dataclass(frozen=True)
class PseudolabelStats:
    coverage: float
    n_total: int
    counts: dict = field(default_factory=dict)
    accuracy: float | None = None


def build_pseudolabels(
    p_a: np.ndarray,
    p_star: np.ndarray,
    gamma: float,
    scheme: SchemeKind,
) -> PseudolabelSet:
    """Apply one selection scheme to the two branches' probabilities.

    p_a is the adaptation branch, p_star the (possibly fused) pre-trained
    branch. The match-or-confidence scheme: agreement always labels with
    the adaptation branch's prediction; on disagreement, a label is taken
    from whichever branch is confident, but only if exactly one is.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0,1), got {gamma}")
    scheme = SchemeKind(scheme)
    p_a = np.asarray(p_a, dtype=np.float64)
    p_star = np.asarray(p_star, dtype=np.float64)
    if p_a.shape != p_star.shape or p_a.ndim != 2:
        raise ConfigError(f"probability shapes differ: {p_a.shape} vs {p_star.shape}")
    n = p_a.shape[0]

    pred_a = np.argmax(p_a, axis=1)
    pred_s = np.argmax(p_star, axis=1)
    conf_a = p_a[np.arange(n), pred_a]
    conf_s = p_star[np.arange(n), pred_s]
    is_match = pred_a == pred_s
    sure_a = conf_a > gamma
    sure_s = conf_s > gamma

    labels = np.full(n, -1, dtype=np.int64)
    confidences = np.zeros(n, dtype=np.float64)
    provenances = np.full(n, -1, dtype=np.int64)

    def take(mask, preds, confs, prov):
        labels[mask] = preds[mask]
        confidences[mask] = confs[mask]
        provenances[mask] = int(prov)

    if scheme == SchemeKind.SELF_CONF:
        take(sure_a, pred_a, conf_a, Provenance.ADAPTATION_BRANCH)
    elif scheme == SchemeKind.OTHER_CONF:
        take(sure_s, pred_s, conf_s, Provenance.PRETRAINED_BRANCH)
    elif scheme == SchemeKind.MATCH:
        take(is_match, pred_a, conf_a, Provenance.MATCH)
    elif scheme == SchemeKind.MATCH_AND_CONF:
        take(is_match & sure_a & sure_s, pred_a, conf_a, Provenance.MATCH)
    elif scheme == SchemeKind.MATCH_OR_CONF:
        take(~is_match & sure_a & ~sure_s, pred_a, conf_a, Provenance.ADAPTATION_BRANCH)
        take(~is_match & sure_s & ~sure_a, pred_s, conf_s, Provenance.PRETRAINED_BRANCH)
        take(is_match, pred_a, conf_a, Provenance.MATCH)
    elif scheme == SchemeKind.STRONG_GUIDANCE:
        take(sure_s, pred_s, conf_s, Provenance.PRETRAINED_BRANCH)
    else:  # pragma: no cover - enum conversion above rejects unknowns
        raise ConfigError(f"unknown scheme {scheme!r}")

    selected = np.flatnonzero(provenances >= 0)
    return PseudolabelSet(
        indices=selected,
        labels=labels[selected],
        confidences=confidences[selected],
        provenances=provenances[selected],
        n_total=n,
    )


def pseudolabel_stats(
    pl: PseudolabelSet, n_total: int, truth: np.ndarray | None = None
) -> PseudolabelStats:
    """Coverage, per-provenance counts, and accuracy against optional truth."""
    if len(pl) and int(pl.indices.max()) >= n_total:
        raise ConfigError(
            f"pseudolabel index {int(pl.indices.max())} out of range for n_total={n_total}"
        )
    counts = {
        PROVENANCE_NAMES[prov]: int(np.sum(pl.provenances == int(prov)))
        for prov in Provenance
    }
    accuracy = None
    if truth is not None and len(pl):
        truth = np.asarray(truth)
        ref = truth[pl.indices]
        labeled = ref >= 0
        if np.any(labeled):
            accuracy = float(np.mean(pl.labels[labeled] == ref[labeled]))
    coverage = len(pl) / n_total if n_total else 0.0
    return PseudolabelStats(
        coverage=coverage, n_total=n_total, counts=counts, accuracy=accuracy
    )


def save_pseudolabel_csv(pl: PseudolabelSet, path: str) -> None:
    """Export as ``sample_index,label,confidence,provenance`` rows."""
    lines = ["sample_index,label,confidence,provenance"]
    for idx, label, conf, prov in pl.entries():
        lines.append(f"{idx},{label},{conf!r},{PROVENANCE_NAMES[prov]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pseudolabel_csv(path: str) -> PseudolabelSet:
    """Read a CSV written by :func:`save_pseudolabel_csv`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "sample_index,label,confidence,provenance":
        raise ConfigError(f"{path}: bad pseudolabel csv header")
    indices, labels, confs, provs = [], [], [], []
    for ln in lines[1:]:
        idx, label, conf, prov = ln.split(",")
        indices.append(int(idx))
        labels.append(int(label))
        confs.append(float(conf))
        provs.append(int(PROVENANCE_BY_NAME[prov]))
    n_total = (max(indices) + 1) if indices else 0
    return PseudolabelSet(
        indices=np.asarray(indices, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        confidences=np.asarray(confs, dtype=np.float64),
        provenances=np.asarray(provs, dtype=np.int64),
        n_total=n_total,
    )
