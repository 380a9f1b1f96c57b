"""Centroid-based classifier math for the frozen pre-trained branch.

Three classifier heads share this module:

- the weighted nearest-centroid classifier, whose centroids are
  probability-weighted sums of normalized features,
- the zero-shot text-centroid classifier built from per-class template
  embeddings,
- the fused head that reweights centroids by the element-wise product of
  both branches' probabilities and blends cosine logits with scaled
  zero-shot logits.

All functions are pure, operate in float64, and are total: degenerate
inputs (empty class mass, zero-norm rows, constant logits) follow the
documented fallback rules instead of raising mid-run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateLogits
from .feature_bank import l2_normalize_rows

MASS_EPS = 1e-8
STD_EPS = 1e-12

WEAK_ALPHA = 1.0
WEAK_ZS_TEMPERATURE = 0.05
STRONG_ALPHA = 0.5
AUTO = "auto"

INVALID_CLASS_LOGIT = -1.0


@dataclass(frozen=True)
class Centroids:
    """Per-class centroids with their accumulated weight mass.

    Classes whose mass fell below ``MASS_EPS`` at the last update are
    flagged invalid; their ``mu`` row holds the global mean of normalized
    features and their logits are pinned to the cosine minimum -1.
    """

    mu: np.ndarray
    mass: np.ndarray
    valid: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class GuidanceMode:
    """How heavily zero-shot logits are blended into the branch logits.

    ``zs_temperature`` may be the string ``"auto"`` only under strong
    guidance, and must be resolved to a number (std ratio of the two logit
    matrices) before fused logits can be formed.
    """

    kind: str  # "weak" or "strong"
    alpha: float
    zs_temperature: float | str

    def __post_init__(self):
        problems = []
        if self.kind not in ("weak", "strong"):
            problems.append(f"kind must be 'weak' or 'strong', got {self.kind!r}")
        if self.kind == "weak":
            if self.alpha != WEAK_ALPHA:
                problems.append(f"weak guidance requires alpha={WEAK_ALPHA}, got {self.alpha}")
            if self.zs_temperature != WEAK_ZS_TEMPERATURE:
                problems.append(
                    f"weak guidance requires zs_temperature={WEAK_ZS_TEMPERATURE}, "
                    f"got {self.zs_temperature!r}"
                )
        if self.kind == "strong":
            if self.alpha != STRONG_ALPHA:
                problems.append(f"strong guidance requires alpha={STRONG_ALPHA}, got {self.alpha}")
            if self.zs_temperature != AUTO and not _is_positive_number(self.zs_temperature):
                problems.append(
                    f"strong guidance zs_temperature must be 'auto' or a positive number, "
                    f"got {self.zs_temperature!r}"
                )
        if problems:
            raise ConfigError("invalid guidance mode", violations=problems)

    @classmethod
    def weak(cls) -> "GuidanceMode":
        return cls(kind="weak", alpha=WEAK_ALPHA, zs_temperature=WEAK_ZS_TEMPERATURE)

    @classmethod
    def strong(cls, zs_temperature: float | str = AUTO) -> "GuidanceMode":
        return cls(kind="strong", alpha=STRONG_ALPHA, zs_temperature=zs_temperature)

    def resolved(self, zs_temperature: float) -> "GuidanceMode":
        return replace(self, zs_temperature=float(zs_temperature))

    def is_auto(self) -> bool:
        return self.zs_temperature == AUTO


def _is_positive_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0


def weighted_centroids(features: np.ndarray, weights: np.ndarray) -> Centroids:
    """Per-class weighted means of L2-normalized feature rows.

    mu[i] = sum_x weights[x,i] * norm(features[x]) / sum_x weights[x,i].
    Weight rows are taken as given; callers feeding element-wise probability
    products rely on the per-class normalization making row scale irrelevant.
    """
    weights = np.asarray(weights, dtype=np.float64)
    normed = l2_normalize_rows(features)
    if weights.ndim != 2 or weights.shape[0] != normed.shape[0]:
        raise ConfigError(
            f"weights shape {weights.shape} does not match N={normed.shape[0]}"
        )
    mass = weights.sum(axis=0)
    valid = mass >= MASS_EPS
    safe_mass = np.where(valid, mass, 1.0)
    mu = (weights.T @ normed) / safe_mass[:, None]
    if not np.all(valid):
        mu[~valid] = normed.mean(axis=0)
    return Centroids(mu=mu, mass=mass, valid=valid)


def cosine_logits(features: np.ndarray, centroids: Centroids) -> np.ndarray:
    """Cosine similarity of every feature row against every centroid.

    Invalid classes get the cosine minimum -1; a zero-norm feature row gets
    a row of zeros (the degenerate-row rule wins over the invalid-class one).
    """
    normed_f = l2_normalize_rows(features)
    normed_mu = l2_normalize_rows(centroids.mu)
    logits = normed_f @ normed_mu.T
    if not np.all(centroids.valid):
        logits[:, ~centroids.valid] = INVALID_CLASS_LOGIT
    zero_rows = ~np.any(normed_f != 0.0, axis=1)
    if np.any(zero_rows):
        logits[zero_rows] = 0.0
    return logits


def softmax_with_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of logits/temperature with max-subtraction."""
    if not temperature > 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    exps = np.exp(scaled)
    return exps / exps.sum(axis=1, keepdims=True)


def zero_shot_centroids(template_sets: list[np.ndarray]) -> Centroids:
    """Mean of row-normalized template embeddings per class, not renormalized.

    ``template_sets[i]`` holds the M_i x D template embeddings of class i;
    ``mass[i]`` records M_i.
    """
    if not template_sets:
        raise ConfigError("no template classes given")
    mu = []
    mass = []
    for i, templates in enumerate(template_sets):
        templates = np.atleast_2d(np.asarray(templates, dtype=np.float64))
        if templates.shape[0] < 1 or templates.size == 0:
            raise ConfigError(f"class {i} has zero template embeddings")
        mu.append(l2_normalize_rows(templates).mean(axis=0))
        mass.append(float(templates.shape[0]))
    mu = np.asarray(mu)
    mass = np.asarray(mass)
    return Centroids(mu=mu, mass=mass, valid=mass >= MASS_EPS)


def zero_shot_probs(
    features: np.ndarray, zs_centroids: Centroids, zs_temperature: float
) -> np.ndarray:
    """Zero-shot probabilities: cosine logits sharpened at the given temperature."""
    return softmax_with_temperature(cosine_logits(features, zs_centroids), zs_temperature)


def fused_centroids(
    features: np.ndarray, adapt_probs: np.ndarray, zs_probs: np.ndarray
) -> Centroids:
    """Centroids weighted by the element-wise product of both branches' probs.

    The product rows are deliberately not renormalized: per-class division
    by the accumulated mass cancels any common row factor.
    """
    adapt_probs = np.asarray(adapt_probs, dtype=np.float64)
    zs_probs = np.asarray(zs_probs, dtype=np.float64)
    if adapt_probs.shape != zs_probs.shape:
        raise ConfigError(
            f"probability shapes differ: {adapt_probs.shape} vs {zs_probs.shape}"
        )
    return weighted_centroids(features, adapt_probs * zs_probs)


def fused_logits(
    features: np.ndarray,
    fused: Centroids,
    zs_logits: np.ndarray,
    alpha: float,
    zs_temperature: float,
) -> np.ndarray:
    """Blend cosine logits against fused centroids with scaled zero-shot logits.

    g = alpha * cos(features, mu) + (1 - alpha) * zs_logits / zs_temperature.
    Callers holding a GuidanceMode pass its resolved fields. The alpha
    endpoints skip the unused term so that alpha=1 output is bit-independent
    of zs_logits and alpha=0 is exactly the scaled zero-shot logits.
    """
    if isinstance(zs_temperature, str):
        raise ConfigError("zs_temperature 'auto' must be resolved before fused_logits")
    if not float(zs_temperature) > 0:
        raise ConfigError(f"zs_temperature must be positive, got {zs_temperature!r}")
    zs_logits = np.asarray(zs_logits, dtype=np.float64)
    alpha = float(alpha)
    inv_t = 1.0 / float(zs_temperature)
    if alpha == 1.0:
        return cosine_logits(features, fused)
    if alpha == 0.0:
        return zs_logits * inv_t
    cos_term = cosine_logits(features, fused)
    return alpha * cos_term + (1.0 - alpha) * (zs_logits * inv_t)


def resolve_strong_zs_temperature(zs_logits: np.ndarray, cos_logits_: np.ndarray) -> float:
    """Std ratio that balances the two addends of the strong-guidance blend.

    Population standard deviation over all N*L entries of each matrix.
    """
    zs_std = float(np.std(np.asarray(zs_logits, dtype=np.float64)))
    cos_std = float(np.std(np.asarray(cos_logits_, dtype=np.float64)))
    if zs_std <= STD_EPS or cos_std <= STD_EPS:
        raise DegenerateLogits(
            "near-constant logit matrix: cannot resolve zs temperature",
            zs_std=zs_std,
            cos_std=cos_std,
        )
    return zs_std / cos_std
