"""Evaluation: micro/macro accuracy, confusion matrix, H-score.

Macro accuracy averages per-class accuracies over classes that actually
appear in the truth vector, so absent classes never contribute 0/0. The
H-score is the harmonic mean of known-class and unknown-class accuracy,
used for open/partial label-space scenarios.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class EvalReport:
    micro_acc: float
    macro_acc: float
    per_class_acc: np.ndarray
    confusion: np.ndarray
    h_score: float | None = None

    def to_dict(self) -> dict:
        out = {
            "micro_acc": self.micro_acc,
            "macro_acc": self.macro_acc,
            "per_class_acc": [float(v) for v in self.per_class_acc],
            "confusion": [[int(v) for v in row] for row in self.confusion],
        }
        if self.h_score is not None:
            out["h_score"] = self.h_score
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def h_score(acc_known: float, acc_unknown: float) -> float:
    """Harmonic mean of the two accuracies; 0 when either is 0."""
    if acc_known <= 0.0 or acc_unknown <= 0.0:
        return 0.0
    return 2.0 * acc_known * acc_unknown / (acc_known + acc_unknown)


def evaluate(
    predictions: np.ndarray,
    truth: np.ndarray,
    known_mask: np.ndarray | None = None,
    n_classes: int | None = None,
) -> EvalReport:
    """Score predictions against truth labels.

    ``known_mask`` marks samples of known classes; when given, the H-score
    over known/unknown accuracy is included (a side with no samples counts
    as accuracy 0). ``n_classes`` sizes the confusion matrix; defaults to
    the largest label seen.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predictions.size == 0 or truth.size == 0:
        raise ConfigError("evaluate requires non-empty inputs")
    if predictions.shape != truth.shape:
        raise ConfigError(
            f"length mismatch: {predictions.shape} predictions vs {truth.shape} truth"
        )
    if int(predictions.min()) < 0 or int(truth.min()) < 0:
        raise ConfigError("evaluate requires non-negative labels; filter unlabeled rows first")
    correct = predictions == truth

    top = int(max(predictions.max(), truth.max()))
    if n_classes is None:
        n_classes = top + 1
    elif top >= n_classes:
        raise ConfigError(f"label {top} outside n_classes={n_classes}")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (truth, predictions), 1)

    per_class = np.zeros(n_classes, dtype=np.float64)
    present = np.zeros(n_classes, dtype=bool)
    for c in range(n_classes):
        mask = truth == c
        if np.any(mask):
            present[c] = True
            per_class[c] = float(np.mean(correct[mask]))
    macro = float(np.mean(per_class[present])) if np.any(present) else 0.0

    hs = None
    if known_mask is not None:
        known_mask = np.asarray(known_mask, dtype=bool)
        if known_mask.shape != truth.shape:
            raise ConfigError("known_mask length mismatch")
        acc_known = float(np.mean(correct[known_mask])) if np.any(known_mask) else 0.0
        acc_unknown = float(np.mean(correct[~known_mask])) if np.any(~known_mask) else 0.0
        hs = h_score(acc_known, acc_unknown)

    return EvalReport(
        micro_acc=float(np.mean(correct)),
        macro_acc=macro,
        per_class_acc=per_class,
        confusion=confusion,
        h_score=hs,
    )
