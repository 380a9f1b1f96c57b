"""Co-learning engine: alternate pseudolabel construction, one SGD pass on
the adaptation branch, and centroid refresh of the frozen pre-trained branch.

Two branch variants share the episode loop. The plain variant scores
target samples with a weighted NCC over the pre-trained features. The
fused variant additionally weights centroids by zero-shot template
probabilities and blends scaled zero-shot logits into the branch logits
(weak guidance keeps the cosine term only; strong guidance balances the
two terms by their std ratio, re-resolved every episode because the fused
centroids move).

Episode order is: pseudolabels from the previous episode's centroids, SGD
over shuffled batches at the episode's learning rate, then a full-set
forward pass to refresh centroids with the updated branch probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptation_model import (
    AdaptationModel,
    SgdSchedule,
    backward_and_step,
    batch_indices,
    colearning_loss,
    forward,
)
from .classifier_branch import (
    WEAK_ZS_TEMPERATURE,
    Centroids,
    GuidanceMode,
    cosine_logits,
    fused_centroids,
    fused_logits,
    resolve_strong_zs_temperature,
    softmax_with_temperature,
    weighted_centroids,
    zero_shot_centroids,
)
from .errors import ConfigError, EmptyPseudolabelSet
from .feature_bank import FeatureBank
from .pseudolabeler import (
    PseudolabelSet,
    SchemeKind,
    build_pseudolabels,
    pseudolabel_stats,
)

DEFAULT_CONF_THRESHOLD = 0.5
LOW_CONF_THRESHOLD = 0.1
DEFAULT_TEMPERATURE = 0.01
DEFAULT_RATIO_CUTOFF = 0.85


@dataclass
class EngineConfig:
    """Run configuration; ``guidance=None`` selects the plain NCC branch."""

    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    temperature: float = DEFAULT_TEMPERATURE
    guidance: GuidanceMode | None = None
    scheme: SchemeKind = SchemeKind.MATCH_OR_CONF
    schedule: SgdSchedule = field(default_factory=SgdSchedule)
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if not 0.0 < self.conf_threshold < 1.0:
            problems.append(
                f"conf_threshold must lie in (0,1), got {self.conf_threshold}"
            )
        if not self.temperature > 0:
            problems.append(f"temperature must be positive, got {self.temperature}")
        try:
            scheme = SchemeKind(self.scheme)
        except ValueError:
            problems.append(f"unknown scheme {self.scheme!r}")
            scheme = None
        if self.guidance is None:
            if scheme == SchemeKind.STRONG_GUIDANCE:
                problems.append("plain co-learning forbids the StrongGuidance scheme")
        elif self.guidance.kind == "weak":
            if scheme != SchemeKind.MATCH_OR_CONF:
                problems.append("weak guidance requires the MatchOrConf scheme")
        elif self.guidance.kind == "strong":
            if scheme != SchemeKind.STRONG_GUIDANCE:
                problems.append("strong guidance requires the StrongGuidance scheme")
        problems.extend(self.schedule.validate())
        return problems

    def check(self) -> "EngineConfig":
        problems = self.validate()
        if problems:
            raise ConfigError("invalid engine config", violations=problems)
        return self


@dataclass(frozen=True)
class EpisodeReport:
    episode: int
    coverage: float
    loss_mean: float
    pseudolabel_accuracy: float | None = None
    branch_accuracies: tuple[float, float] | None = None
    resolved_zs_temperature: float | None = None

    def to_dict(self) -> dict:
        out = {
            "episode": self.episode,
            "coverage": self.coverage,
            "loss_mean": self.loss_mean,
        }
        if self.pseudolabel_accuracy is not None:
            out["pseudolabel_accuracy"] = self.pseudolabel_accuracy
        if self.branch_accuracies is not None:
            out["adaptation_accuracy"] = self.branch_accuracies[0]
            out["pretrained_accuracy"] = self.branch_accuracies[1]
        if self.resolved_zs_temperature is not None:
            out["resolved_zs_temperature"] = self.resolved_zs_temperature
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeReport":
        branch = None
        if "adaptation_accuracy" in d:
            branch = (d["adaptation_accuracy"], d["pretrained_accuracy"])
        return cls(
            episode=int(d["episode"]),
            coverage=float(d["coverage"]),
            loss_mean=float(d["loss_mean"]),
            pseudolabel_accuracy=d.get("pseudolabel_accuracy"),
            branch_accuracies=branch,
            resolved_zs_temperature=d.get("resolved_zs_temperature"),
        )


class _NccBranch:
    """Weighted NCC over pre-trained features, refreshed from p_a."""

    def __init__(self, star_features: np.ndarray):
        self.star = star_features
        self.centroids: Centroids | None = None

    def refresh(self, p_a: np.ndarray) -> None:
        self.centroids = weighted_centroids(self.star, p_a)

    def episode_probs(self, temperature: float):
        logits = cosine_logits(self.star, self.centroids)
        return softmax_with_temperature(logits, temperature), None


class _FusedBranch:
    """NCC with zero-shot-weighted centroids and blended zero-shot logits.

    Zero-shot centroids, logits, and the NCC-weight probabilities are
    computed once (the pre-trained features never move). Under strong
    guidance the blend temperature is the std ratio of the zero-shot
    logits to the current cosine logits, re-resolved each episode; the
    NCC weights always use the fixed zero-shot default temperature.
    """

    def __init__(
        self,
        star_features: np.ndarray,
        template_sets: list[np.ndarray],
        mode: GuidanceMode,
    ):
        self.star = star_features
        self.mode = mode
        zs = zero_shot_centroids(template_sets)
        self.zs_logits = cosine_logits(star_features, zs)
        weight_temp = (
            float(mode.zs_temperature) if not mode.is_auto() else WEAK_ZS_TEMPERATURE
        )
        self.zs_probs = softmax_with_temperature(self.zs_logits, weight_temp)
        self.centroids: Centroids | None = None

    def refresh(self, p_a: np.ndarray) -> None:
        self.centroids = fused_centroids(self.star, p_a, self.zs_probs)

    def episode_probs(self, temperature: float):
        if self.mode.is_auto():
            cos = cosine_logits(self.star, self.centroids)
            zs_temp = resolve_strong_zs_temperature(self.zs_logits, cos)
        else:
            zs_temp = float(self.mode.zs_temperature)
        logits = fused_logits(
            self.star, self.centroids, self.zs_logits, self.mode.alpha, zs_temp
        )
        return softmax_with_temperature(logits, temperature), zs_temp


def _truth_labels(bank: FeatureBank) -> np.ndarray | None:
    if bank.labels is None:
        return None
    labels = np.asarray(bank.labels, dtype=np.int64)
    return labels if np.any(labels >= 0) else None


def _masked_accuracy(preds: np.ndarray, truth: np.ndarray) -> float | None:
    mask = truth >= 0
    if not np.any(mask):
        return None
    return float(np.mean(preds[mask] == truth[mask]))


def _run_episodes(
    source_model: AdaptationModel,
    bank_a: FeatureBank,
    branch,
    cfg: EngineConfig,
) -> tuple[AdaptationModel, list[EpisodeReport]]:
    model = source_model.copy()
    model.frozen_classifier = True
    rng = np.random.default_rng(cfg.seed)
    feats_a = np.asarray(bank_a.features, dtype=np.float64)
    truth = _truth_labels(bank_a)
    n = bank_a.n_samples

    _, p_a = forward(model, feats_a)
    branch.refresh(p_a)

    reports: list[EpisodeReport] = []
    for episode in range(cfg.schedule.episodes):
        p_star, zs_temp = branch.episode_probs(cfg.temperature)
        pl = build_pseudolabels(p_a, p_star, cfg.conf_threshold, cfg.scheme)
        if len(pl) == 0:
            raise EmptyPseudolabelSet(
                f"no sample pseudolabeled at episode {episode}",
                episode=episode,
                conf_threshold=cfg.conf_threshold,
                scheme=SchemeKind(cfg.scheme).value,
                max_adaptation_confidence=float(p_a.max(axis=1).max()),
                max_pretrained_confidence=float(p_star.max(axis=1).max()),
            )
        lr = cfg.schedule.lr_for_episode(episode)
        loss_sum = 0.0
        for idx in batch_indices(len(pl), cfg.schedule.batch_size, rng):
            rows = pl.indices[idx]
            labels = pl.labels[idx]
            _, probs = forward(model, feats_a[rows])
            loss_sum += colearning_loss(probs, labels) * labels.size
            backward_and_step(model, feats_a[rows], labels, lr)
        _, p_a = forward(model, feats_a)
        branch.refresh(p_a)

        stats = pseudolabel_stats(pl, n, truth)
        branch_acc = None
        if truth is not None:
            adapt_acc = _masked_accuracy(np.argmax(p_a, axis=1), truth)
            star_acc = _masked_accuracy(np.argmax(p_star, axis=1), truth)
            if adapt_acc is not None:
                branch_acc = (adapt_acc, star_acc)
        reports.append(
            EpisodeReport(
                episode=episode,
                coverage=stats.coverage,
                loss_mean=loss_sum / len(pl),
                pseudolabel_accuracy=stats.accuracy,
                branch_accuracies=branch_acc,
                resolved_zs_temperature=zs_temp,
            )
        )
    return model, reports


def _check_banks(model: AdaptationModel, bank_a: FeatureBank, bank_star: FeatureBank):
    problems = []
    if bank_a.n_samples != bank_star.n_samples:
        problems.append(
            f"target banks index different sample counts: "
            f"{bank_a.n_samples} vs {bank_star.n_samples}"
        )
    if bank_a.dim != model.input_dim:
        problems.append(
            f"adaptation-view dim {bank_a.dim} does not match model input "
            f"{model.input_dim}"
        )
    if problems:
        raise ConfigError("incompatible inputs", violations=problems)


def run_colearn(
    source_model: AdaptationModel,
    bank_a: FeatureBank,
    bank_star: FeatureBank,
    cfg: EngineConfig,
) -> tuple[AdaptationModel, list[EpisodeReport]]:
    """Adapt with the plain weighted-NCC pre-trained branch.

    Centroids are initialized from the source model's probabilities before
    the first episode. Only the adaptation model is returned; the branch
    is discarded after the run.
    """
    cfg.check()
    if cfg.guidance is not None:
        raise ConfigError("run_colearn requires cfg.guidance=None")
    _check_banks(source_model, bank_a, bank_star)
    branch = _NccBranch(np.asarray(bank_star.features, dtype=np.float64))
    return _run_episodes(source_model, bank_a, branch, cfg)


def run_colearn_plus(
    source_model: AdaptationModel,
    bank_a: FeatureBank,
    bank_star: FeatureBank,
    template_sets: list[np.ndarray],
    cfg: EngineConfig,
) -> tuple[AdaptationModel, list[EpisodeReport]]:
    """Adapt with the fused zero-shot-guided pre-trained branch."""
    cfg.check()
    if cfg.guidance is None:
        raise ConfigError("run_colearn_plus requires weak or strong guidance")
    _check_banks(source_model, bank_a, bank_star)
    if len(template_sets) != source_model.n_classes:
        raise ConfigError(
            f"template banks cover {len(template_sets)} classes, "
            f"model expects {source_model.n_classes}"
        )
    branch = _FusedBranch(
        np.asarray(bank_star.features, dtype=np.float64), template_sets, cfg.guidance
    )
    return _run_episodes(source_model, bank_a, branch, cfg)


def build_branch_pseudolabels(
    model: AdaptationModel,
    bank_a: FeatureBank,
    bank_star: FeatureBank,
    template_sets: list[np.ndarray] | None,
    cfg: EngineConfig,
) -> PseudolabelSet:
    """The pseudolabel set the engine would construct at its next episode,
    with branch centroids initialized from the given model's probabilities.

    This is the export hook: run it with the adapted model to hand
    co-learned pseudolabels to an external consumer.
    """
    cfg.check()
    _check_banks(model, bank_a, bank_star)
    star = np.asarray(bank_star.features, dtype=np.float64)
    if cfg.guidance is None:
        branch = _NccBranch(star)
    else:
        if template_sets is None:
            raise ConfigError("guided modes need template embeddings")
        if len(template_sets) != model.n_classes:
            raise ConfigError(
                f"template banks cover {len(template_sets)} classes, "
                f"model expects {model.n_classes}"
            )
        branch = _FusedBranch(star, template_sets, cfg.guidance)
    _, p_a = forward(model, np.asarray(bank_a.features, dtype=np.float64))
    branch.refresh(p_a)
    p_star, _ = branch.episode_probs(cfg.temperature)
    return build_pseudolabels(p_a, p_star, cfg.conf_threshold, cfg.scheme)


def _ncc_accuracy(features: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    onehot = np.zeros((labels.size, n_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    centroids = weighted_centroids(features, onehot)
    preds = np.argmax(cosine_logits(features, centroids), axis=1)
    return float(np.mean(preds == labels))


def gamma_for_ratio(ratio: float, cutoff: float = DEFAULT_RATIO_CUTOFF) -> float:
    """Map the target-compatibility ratio to a confidence threshold."""
    return LOW_CONF_THRESHOLD if ratio < cutoff else DEFAULT_CONF_THRESHOLD


def recommend_gamma(
    bank_src_feats: FeatureBank,
    bank_pre_feats: FeatureBank,
    proxy_labels: np.ndarray,
    cutoff: float = DEFAULT_RATIO_CUTOFF,
) -> tuple[float, float]:
    """Pick the confidence threshold from the target-compatibility ratio.

    Fits an NCC head on each bank against the proxy labels (true labels in
    oracle mode, zero-shot predictions in estimated mode) and compares
    their accuracies: a source extractor much less target-compatible than
    the pre-trained one calls for the low threshold.
    """
    proxy = np.asarray(proxy_labels, dtype=np.int64)
    if proxy.shape != (bank_src_feats.n_samples,) or bank_pre_feats.n_samples != proxy.size:
        raise ConfigError("proxy labels must match both banks' sample count")
    classes = np.unique(proxy)
    if classes.size < 2 or classes.min() < 0:
        raise ConfigError(
            f"degenerate proxy labels: need >= 2 non-negative classes, got {classes.tolist()[:8]}"
        )
    n_classes = int(classes.max()) + 1
    acc_src = _ncc_accuracy(
        np.asarray(bank_src_feats.features, dtype=np.float64), proxy, n_classes
    )
    acc_pre = _ncc_accuracy(
        np.asarray(bank_pre_feats.features, dtype=np.float64), proxy, n_classes
    )
    if acc_pre == 0.0:
        raise ConfigError("pre-trained NCC accuracy is zero; ratio undefined")
    ratio = acc_src / acc_pre
    return ratio, gamma_for_ratio(ratio, cutoff)


@dataclass(frozen=True)
class GuidanceSelection:
    mode: GuidanceMode
    image_accuracy: float
    text_accuracy: float

    def to_dict(self) -> dict:
        return {
            "guidance": self.mode.kind,
            "image_accuracy": self.image_accuracy,
            "text_accuracy": self.text_accuracy,
        }


def choose_guidance(image_accuracy: float, text_accuracy: float) -> GuidanceMode:
    """Weak when the image-based classifier is at least as good; the tie
    goes to weak."""
    if image_accuracy >= text_accuracy:
        return GuidanceMode.weak()
    return GuidanceMode.strong()


def select_guidance(
    bank_star: FeatureBank,
    template_sets: list[np.ndarray],
    k: int = 3,
    seeds: int = 3,
    per_class: bool = False,
    seed: int = 0,
) -> GuidanceSelection:
    """Pick guidance strength from k-shot accuracies of two label-free heads.

    The text classifier scores by cosine against zero-shot template
    centroids. The image classifier is the weak-guidance head: centroids
    weighted by the text classifier's probabilities, scored by cosine.
    Both are fit on the full unlabeled bank; their accuracy is measured on
    seeded k-shot labeled subsets (k per class when ``per_class``, else
    k * L samples) and averaged over ``seeds`` draws.
    """
    if seeds < 1:
        raise ConfigError(f"seeds must be >= 1, got {seeds}")
    truth = _truth_labels(bank_star)
    if truth is None:
        raise ConfigError("guidance selection needs a labeled bank for k-shot scoring")
    features = np.asarray(bank_star.features, dtype=np.float64)
    n_classes = len(template_sets)

    zs = zero_shot_centroids(template_sets)
    zs_logits = cosine_logits(features, zs)
    text_preds = np.argmax(zs_logits, axis=1)
    zs_probs = softmax_with_temperature(zs_logits, WEAK_ZS_TEMPERATURE)
    image_centroids = weighted_centroids(features, zs_probs)
    image_preds = np.argmax(cosine_logits(features, image_centroids), axis=1)

    image_accs, text_accs = [], []
    for s in range(seeds):
        rng = np.random.default_rng([seed, s])
        if per_class:
            chosen = []
            for c in range(n_classes):
                class_idx = np.flatnonzero(truth == c)
                if class_idx.size == 0:
                    raise ConfigError(f"k-shot subset missing class {c}")
                take = min(k, class_idx.size)
                chosen.append(rng.choice(class_idx, size=take, replace=False))
            idx = np.concatenate(chosen)
        else:
            labeled = np.flatnonzero(truth >= 0)
            take = min(k * n_classes, labeled.size)
            idx = rng.choice(labeled, size=take, replace=False)
        image_accs.append(float(np.mean(image_preds[idx] == truth[idx])))
        text_accs.append(float(np.mean(text_preds[idx] == truth[idx])))

    image_acc = float(np.mean(image_accs))
    text_acc = float(np.mean(text_accs))
    return GuidanceSelection(
        mode=choose_guidance(image_acc, text_acc),
        image_accuracy=image_acc,
        text_accuracy=text_acc,
    )
