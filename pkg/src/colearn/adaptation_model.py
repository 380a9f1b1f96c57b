"""The trainable branch: small feature map, frozen linear classifier, SGD.

The feature map is depth 1 (a single affine layer, identity-initialized)
or depth 2 (affine, tanh, affine). The linear classifier on top is frozen
during adaptation; it only trains during source-model fitting. Gradients
are written out by hand so they can be checked against finite differences.

Model file format (all little-endian):

    magic    4 bytes  b"CLMD"
    version  u32      1
    depth    u8       1 or 2
    frozen   u8       frozen_classifier flag
    dims     u32 x4   input_dim, hidden_dim (0 when depth 1), output_dim, n_classes
    params   float32  W0, b0, [W1, b1,] clf_weight, clf_bias in declaration order

Parameters live in float64 in memory and are cast to float32 at write
time; save(load(path)) reproduces the file bytes exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyBatch, ModelFormatError, NumericalBlowup

MODEL_MAGIC = b"CLMD"
MODEL_VERSION = 1

LOG_FLOOR = 1e-12


@dataclass
class SgdSchedule:
    """Step-decay SGD schedule; lr is constant within an episode."""

    lr_initial: float = 0.01
    lr_after_decay: float = 0.001
    decay_episode: int = 10
    batch_size: int = 50
    episodes: int = 15

    def validate(self) -> list[str]:
        problems = []
        if not self.lr_initial >= 0:
            problems.append(f"lr_initial must be >= 0, got {self.lr_initial}")
        if not self.lr_after_decay >= 0:
            problems.append(f"lr_after_decay must be >= 0, got {self.lr_after_decay}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.episodes < 0:
            problems.append(f"episodes must be >= 0, got {self.episodes}")
        if self.decay_episode > self.episodes:
            problems.append(
                f"decay_episode {self.decay_episode} exceeds episodes {self.episodes}"
            )
        return problems

    def lr_for_episode(self, episode: int) -> float:
        return self.lr_initial if episode < self.decay_episode else self.lr_after_decay


@dataclass
class AdaptationModel:
    """Feature-map parameters plus a (normally frozen) linear classifier."""

    feature_weights: list[np.ndarray]
    feature_biases: list[np.ndarray]
    clf_weight: np.ndarray
    clf_bias: np.ndarray
    frozen_classifier: bool = True

    @property
    def depth(self) -> int:
        return len(self.feature_weights)

    @property
    def input_dim(self) -> int:
        return self.feature_weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.feature_weights[-1].shape[0]

    @property
    def n_classes(self) -> int:
        return self.clf_weight.shape[0]

    @classmethod
    def init(
        cls,
        dim: int,
        n_classes: int,
        depth: int = 1,
        hidden: int | None = None,
        seed: int = 0,
    ) -> "AdaptationModel":
        """Identity-initialized affine map (depth 1) or tanh MLP (depth 2),
        with a small seeded random classifier."""
        if depth not in (1, 2):
            raise ConfigError(f"depth must be 1 or 2, got {depth}")
        rng = np.random.default_rng(seed)
        if depth == 1:
            weights = [np.eye(dim)]
            biases = [np.zeros(dim)]
        else:
            hidden = hidden or dim
            weights = [
                rng.normal(0.0, 1.0 / np.sqrt(dim), size=(hidden, dim)),
                rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(dim, hidden)),
            ]
            biases = [np.zeros(hidden), np.zeros(dim)]
        clf_weight = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_classes, dim))
        clf_bias = np.zeros(n_classes)
        return cls(weights, biases, clf_weight, clf_bias, frozen_classifier=True)

    def copy(self) -> "AdaptationModel":
        return AdaptationModel(
            feature_weights=[w.copy() for w in self.feature_weights],
            feature_biases=[b.copy() for b in self.feature_biases],
            clf_weight=self.clf_weight.copy(),
            clf_bias=self.clf_bias.copy(),
            frozen_classifier=self.frozen_classifier,
        )

    def params_equal(self, other: "AdaptationModel") -> bool:
        mine = _param_list(self)
        theirs = _param_list(other)
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(mine, theirs)
        )


def _param_list(model: AdaptationModel) -> list[np.ndarray]:
    out = []
    for w, b in zip(model.feature_weights, model.feature_biases):
        out.extend([w, b])
    out.extend([model.clf_weight, model.clf_bias])
    return out


def _feature_pass(model: AdaptationModel, x: np.ndarray):
    """Returns (pre-activation, hidden activation, output features)."""
    if model.depth == 1:
        z = x @ model.feature_weights[0].T + model.feature_biases[0]
        return None, None, z
    a = x @ model.feature_weights[0].T + model.feature_biases[0]
    h = np.tanh(a)
    z = h @ model.feature_weights[1].T + model.feature_biases[1]
    return a, h, z


def forward(model: AdaptationModel, features: np.ndarray):
    """Logits and softmax probabilities (temperature 1) for a batch."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ConfigError(
            f"features shape {x.shape} does not match model input width {model.input_dim}"
        )
    _, _, z = _feature_pass(model, x)
    logits = z @ model.clf_weight.T + model.clf_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=1, keepdims=True)
    return logits, probs


def predict(model: AdaptationModel, features: np.ndarray) -> np.ndarray:
    logits, _ = forward(model, features)
    return np.argmax(logits, axis=1)


def colearning_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of assigned labels, with the log floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyBatch("no pseudolabeled samples in batch")
    picked = probs[np.arange(labels.size), labels]
    return float(np.mean(-np.log(np.maximum(picked, LOG_FLOOR))))


def temperature_loss(probs: np.ndarray, labels: np.ndarray, tau: float) -> float:
    """Cross-entropy after re-sharpening the probabilities at temperature tau.

    softmax(log p / tau) equals softmax(logits / tau) because log-softmax
    differs from the logits only by a per-row constant. tau=1 reduces to
    colearning_loss. Exported for the open/partial-set integration hook,
    where the caller applies the 0.3 loss weight.
    """
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyBatch("no pseudolabeled samples in batch")
    scaled = np.log(np.maximum(probs, LOG_FLOOR)) / tau
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    resharpened = exps / exps.sum(axis=1, keepdims=True)
    picked = resharpened[np.arange(labels.size), labels]
    return float(np.mean(-np.log(np.maximum(picked, LOG_FLOOR))))


def gradients(model: AdaptationModel, batch_features: np.ndarray, batch_labels: np.ndarray):
    """Hand-derived gradients of the mean cross-entropy over the batch.

    Returns (feature_weight_grads, feature_bias_grads, clf_weight_grad,
    clf_bias_grad). Classifier gradients are returned regardless of the
    freeze flag; the step function decides whether to apply them.
    """
    x = np.asarray(batch_features, dtype=np.float64)
    labels = np.asarray(batch_labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyBatch("no pseudolabeled samples in batch")
    n = labels.size
    _, h, z = _feature_pass(model, x)
    logits = z @ model.clf_weight.T + model.clf_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=1, keepdims=True)

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    dclf_w = dlogits.T @ z
    dclf_b = dlogits.sum(axis=0)
    dz = dlogits @ model.clf_weight

    if model.depth == 1:
        dw0 = dz.T @ x
        db0 = dz.sum(axis=0)
        return [dw0], [db0], dclf_w, dclf_b

    dw1 = dz.T @ h
    db1 = dz.sum(axis=0)
    dh = dz @ model.feature_weights[1]
    da = dh * (1.0 - h * h)
    dw0 = da.T @ x
    db0 = da.sum(axis=0)
    return [dw0, dw1], [db0, db1], dclf_w, dclf_b


def backward_and_step(
    model: AdaptationModel,
    batch_features: np.ndarray,
    batch_labels: np.ndarray,
    lr: float,
) -> AdaptationModel:
    """One in-place SGD step on the feature map (and the classifier only
    when it is not frozen). Returns the updated model."""
    w_grads, b_grads, dclf_w, dclf_b = gradients(model, batch_features, batch_labels)
    all_grads = list(w_grads) + list(b_grads)
    if not model.frozen_classifier:
        all_grads += [dclf_w, dclf_b]
    if not all(np.all(np.isfinite(g)) for g in all_grads):
        logits, _ = forward(model, batch_features)
        raise NumericalBlowup(
            "non-finite gradient",
            batch_size=int(np.asarray(batch_labels).size),
            lr=float(lr),
            max_abs_logit=float(np.max(np.abs(logits))),
        )
    for w, dw in zip(model.feature_weights, w_grads):
        w -= lr * dw
    for b, db in zip(model.feature_biases, b_grads):
        b -= lr * db
    if not model.frozen_classifier:
        model.clf_weight -= lr * dclf_w
        model.clf_bias -= lr * dclf_b
    return model


def batch_indices(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches covering [0, n); the last partial batch is kept."""
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def save_model(model: AdaptationModel, path: str) -> None:
    if model.depth == 2:
        hidden = model.feature_weights[0].shape[0]
    else:
        hidden = 0
    header = MODEL_MAGIC + struct.pack(
        "<IBBIIII",
        MODEL_VERSION,
        model.depth,
        1 if model.frozen_classifier else 0,
        model.input_dim,
        hidden,
        model.output_dim,
        model.n_classes,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in _param_list(model):
            fh.write(arr.astype("<f4").tobytes())


def load_model(path: str) -> AdaptationModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {blob[:4]!r}")
    header_size = 4 + struct.calcsize("<IBBIIII")
    if len(blob) < header_size:
        raise ModelFormatError(f"{path}: header truncated")
    version, depth, frozen, in_dim, hidden, out_dim, n_classes = struct.unpack(
        "<IBBIIII", blob[4:header_size]
    )
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: version {version}, expected {MODEL_VERSION}")
    if depth not in (1, 2):
        raise ModelFormatError(f"{path}: bad depth {depth}")
    if depth == 1:
        shapes = [(out_dim, in_dim), (out_dim,)]
    else:
        shapes = [(hidden, in_dim), (hidden,), (out_dim, hidden), (out_dim,)]
    shapes += [(n_classes, out_dim), (n_classes,)]
    arrays = []
    offset = header_size
    for shape in shapes:
        count = int(np.prod(shape))
        end = offset + count * 4
        if end > len(blob):
            raise ModelFormatError(f"{path}: parameter block truncated")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.astype(np.float64).reshape(shape))
        offset = end
    if offset != len(blob):
        raise ModelFormatError(f"{path}: {len(blob) - offset} trailing bytes")
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise ModelFormatError(f"{path}: non-finite parameters")
    if depth == 1:
        weights, biases = [arrays[0]], [arrays[1]]
        clf_w, clf_b = arrays[2], arrays[3]
    else:
        weights, biases = [arrays[0], arrays[2]], [arrays[1], arrays[3]]
        clf_w, clf_b = arrays[4], arrays[5]
    return AdaptationModel(
        feature_weights=weights,
        feature_biases=biases,
        clf_weight=clf_w,
        clf_bias=clf_b,
        frozen_classifier=bool(frozen),
    )
