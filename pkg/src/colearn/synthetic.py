"""Seeded synthetic benchmark: Gaussian class clusters under covariate shift.

Class means sit on a seeded random simplex scaled by ``class_separation``.
Source samples are mean + isotropic noise. Target samples share their
per-sample noise draw across two "views": the source-extractor view sees
the full rotation/translation shift, the pre-trained view sees the same
shift at ``star_shift_fraction`` strength (it is the more target-compatible
extractor). Template embeddings are noisy copies of the pre-trained view's
class means, standing in for aligned text embeddings.

Label-space scenarios carve the global class list into shared,
source-private and target-private index sets; all banks carry labels in
the global class list so evaluation can mask unknown classes.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .adaptation_model import (
    AdaptationModel,
    SgdSchedule,
    backward_and_step,
    batch_indices,
    forward,
)
from .errors import ConfigError, ConvergenceError
from .feature_bank import FeatureBank, default_class_names, rows_by_class


class Scenario(str, enum.Enum):
    CLOSED_SET = "ClosedSet"
    OPEN_SET = "OpenSet"
    PARTIAL_SET = "PartialSet"
    OPEN_PARTIAL = "OpenPartial"


@dataclass(frozen=True)
class ShiftSpec:
    """Generator knobs. Defaults are the calibrated moderate-shift setting
    used by the synthetic acceptance experiments."""

    n_classes: int = 6
    dim: int = 16
    n_source: int = 600
    n_target: int = 600
    class_separation: float = 3.0
    rotation_angle: float = 1.0
    mean_translation: float = 1.5
    noise_sigma: float = 0.8
    star_shift_fraction: float = 0.25
    n_templates: int = 8
    template_sigma: float = 0.25
    scenario: Scenario = Scenario.CLOSED_SET
    n_source_private: int = 0
    n_target_private: int = 0
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if self.n_classes < 2:
            problems.append(f"n_classes must be >= 2, got {self.n_classes}")
        if self.dim < 2:
            problems.append(f"dim must be >= 2, got {self.dim}")
        if self.n_source < self.n_classes or self.n_target < self.n_classes:
            problems.append("need at least one sample per class in each split")
        if self.noise_sigma <= 0:
            problems.append(f"noise_sigma must be positive, got {self.noise_sigma}")
        if not 0.0 <= self.star_shift_fraction <= 1.0:
            problems.append(
                f"star_shift_fraction must lie in [0,1], got {self.star_shift_fraction}"
            )
        if self.n_templates < 1:
            problems.append(f"n_templates must be >= 1, got {self.n_templates}")
        scenario = Scenario(self.scenario)
        n_private = self.n_source_private + self.n_target_private
        if n_private >= self.n_classes:
            problems.append("private classes leave no shared classes")
        if scenario == Scenario.CLOSED_SET and n_private:
            problems.append("ClosedSet forbids private classes")
        if scenario == Scenario.OPEN_SET and (
            self.n_source_private or not self.n_target_private
        ):
            problems.append("OpenSet needs target-private classes only")
        if scenario == Scenario.PARTIAL_SET and (
            self.n_target_private or not self.n_source_private
        ):
            problems.append("PartialSet needs source-private classes only")
        if scenario == Scenario.OPEN_PARTIAL and (
            not self.n_source_private or not self.n_target_private
        ):
            problems.append("OpenPartial needs both private kinds")
        return problems

    def class_splits(self) -> tuple[list[int], list[int], list[int]]:
        """(shared, source_private, target_private) global class indices.

        Layout mirrors the open-partial protocol: shared classes first,
        then source-private, then target-private.
        """
        n_shared = self.n_classes - self.n_source_private - self.n_target_private
        shared = list(range(n_shared))
        source_private = list(range(n_shared, n_shared + self.n_source_private))
        target_private = list(
            range(n_shared + self.n_source_private, self.n_classes)
        )
        return shared, source_private, target_private

    def to_json(self) -> str:
        d = asdict(self)
        d["scenario"] = Scenario(self.scenario).value
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftSpec":
        d = dict(d)
        if "scenario" in d:
            d["scenario"] = Scenario(d["scenario"])
        return cls(**d)


@dataclass(frozen=True)
class SyntheticBenchmark:
    source: FeatureBank
    target_a: FeatureBank
    target_star: FeatureBank
    templates: FeatureBank
    spec: ShiftSpec

    def template_sets(self) -> list[np.ndarray]:
        return rows_by_class(self.templates)


def _rotation_matrix(dim: int, angle: float) -> np.ndarray:
    """Block-diagonal Givens rotation by ``angle`` in consecutive coordinate
    pairs; an odd final coordinate is left fixed."""
    rot = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    for i in range(0, dim - 1, 2):
        rot[i, i] = c
        rot[i, i + 1] = -s
        rot[i + 1, i] = s
        rot[i + 1, i + 1] = c
    return rot


def _balanced_labels(n: int, classes: list[int], rng: np.random.Generator) -> np.ndarray:
    reps = -(-n // len(classes))
    labels = np.tile(np.asarray(classes, dtype=np.int64), reps)[:n]
    rng.shuffle(labels)
    return labels


def generate(spec: ShiftSpec) -> SyntheticBenchmark:
    """Draw the four index-aligned banks for one seeded benchmark instance."""
    problems = spec.validate()
    if problems:
        raise ConfigError("invalid shift spec", violations=problems)
    rng = np.random.default_rng(spec.seed)
    shared, source_private, target_private = spec.class_splits()
    source_classes = shared + source_private
    target_classes = shared + target_private

    directions = rng.normal(size=(spec.n_classes, spec.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * spec.class_separation

    rot_a = _rotation_matrix(spec.dim, spec.rotation_angle)
    rot_star = _rotation_matrix(spec.dim, spec.rotation_angle * spec.star_shift_fraction)
    shift_dir = rng.normal(size=spec.dim)
    shift_dir /= np.linalg.norm(shift_dir)
    offset_a = spec.mean_translation * shift_dir
    offset_star = spec.star_shift_fraction * spec.mean_translation * shift_dir

    class_names = default_class_names(spec.n_classes)

    src_labels = _balanced_labels(spec.n_source, source_classes, rng)
    src_noise = rng.normal(scale=spec.noise_sigma, size=(spec.n_source, spec.dim))
    src_features = means[src_labels] + src_noise

    tgt_labels = _balanced_labels(spec.n_target, target_classes, rng)
    tgt_noise = rng.normal(scale=spec.noise_sigma, size=(spec.n_target, spec.dim))
    tgt_a = means[tgt_labels] @ rot_a.T + offset_a + tgt_noise
    tgt_star = means[tgt_labels] @ rot_star.T + offset_star + tgt_noise

    star_means = means @ rot_star.T + offset_star
    template_labels = np.repeat(np.arange(spec.n_classes, dtype=np.int64), spec.n_templates)
    template_noise = rng.normal(
        scale=spec.template_sigma, size=(template_labels.size, spec.dim)
    )
    template_features = star_means[template_labels] + template_noise

    def bank(features, labels, domain):
        return FeatureBank(
            features=features.astype(np.float32),
            labels=labels.astype(np.int32),
            class_names=class_names,
            domain_name=domain,
        )

    return SyntheticBenchmark(
        source=bank(src_features, src_labels, "synthetic-source"),
        target_a=bank(tgt_a, tgt_labels, "synthetic-target-adaptation-view"),
        target_star=bank(tgt_star, tgt_labels, "synthetic-target-pretrained-view"),
        templates=bank(template_features, template_labels, "synthetic-templates"),
        spec=spec,
    )


def train_source(
    source: FeatureBank,
    schedule: SgdSchedule | None = None,
    seed: int = 0,
    min_accuracy: float = 0.95,
    max_epochs: int = 200,
    depth: int = 1,
    hidden: int | None = None,
) -> AdaptationModel:
    """Fit the desk-scale source model with supervised cross-entropy SGD.

    Both the feature map and the classifier train here; the classifier is
    frozen on return, ready for adaptation. Stops as soon as training
    accuracy reaches ``min_accuracy``; raises after ``max_epochs`` without
    reaching it, carrying the final accuracy.
    """
    if schedule is None:
        # Source fitting wants a constant lr; the decayed-lr schedule is for
        # adaptation episodes.
        schedule = SgdSchedule(lr_after_decay=0.01)
    if source.labels is None or not np.all(source.labeled_mask()):
        raise ConfigError("source bank must be fully labeled")
    labels = np.asarray(source.labels, dtype=np.int64)
    n_classes = source.n_classes
    model = AdaptationModel.init(
        source.dim, n_classes, depth=depth, hidden=hidden, seed=seed
    )
    model.frozen_classifier = False
    rng = np.random.default_rng(seed)
    features = np.asarray(source.features, dtype=np.float64)

    def accuracy() -> float:
        _, probs = forward(model, features)
        return float(np.mean(np.argmax(probs, axis=1) == labels))

    acc = accuracy()
    for epoch in range(max_epochs):
        if acc >= min_accuracy:
            break
        lr = schedule.lr_for_episode(epoch)
        for idx in batch_indices(features.shape[0], schedule.batch_size, rng):
            backward_and_step(model, features[idx], labels[idx], lr)
        acc = accuracy()
    if acc < min_accuracy:
        raise ConvergenceError(
            f"source training stalled at accuracy {acc:.4f} "
            f"(target {min_accuracy}) after {max_epochs} epochs",
            accuracy=acc,
        )
    model.frozen_classifier = True
    return model
