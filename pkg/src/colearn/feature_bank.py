"""Feature-bank container and on-disk formats.

A bank holds N embedding rows of dimension D extracted by some frozen
backbone, plus optional per-row class labels (-1 marks an unlabeled row)
and naming metadata. Banks are immutable once constructed: downstream
stages must never mutate pre-extracted features.

Binary format (all little-endian), extension-agnostic:

    magic   4 bytes  b"FBNK"
    version u32      1
    N       u32
    D       u32
    labels  u8       1 if a label block follows the features, else 0
    data    N*D float32, row-major
    labels  N int32, only when the flag is 1

Metadata (class names, domain name) travels in a JSON sidecar at
``<path>.meta.json``. A CSV alternative with header ``d0,...,dK[,label]``
is accepted for hand-written fixtures; ``load_bank`` dispatches on the
``.csv`` extension.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    BankFormatError,
    LabelOutOfRange,
    NonFiniteValues,
    Truncated,
    UnsupportedVersion,
)

MAGIC = b"FBNK"
VERSION = 1

UNLABELED = -1


def _meta_path(path: str) -> str:
    return str(path) + ".meta.json"


def default_class_names(n_classes: int) -> list[str]:
    width = max(2, len(str(max(n_classes - 1, 0))))
    return [f"class_{i:0{width}d}" for i in range(n_classes)]


@dataclass(frozen=True)
class FeatureBank:
    """Immutable bank of N x D float32 features with optional labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    class_names: list[str] = field(default_factory=list)
    domain_name: str = ""

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features), dtype=np.float32)
        if feats.ndim != 2:
            raise BankFormatError(f"features must be 2-d, got shape {feats.shape}")
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise BankFormatError(f"bank must have N >= 1 and D >= 1, got {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise NonFiniteValues("features contain non-finite values")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)

        labels = self.labels
        if labels is not None:
            labels = np.ascontiguousarray(np.asarray(labels), dtype=np.int32)
            if labels.shape != (feats.shape[0],):
                raise BankFormatError(
                    f"labels shape {labels.shape} does not match N={feats.shape[0]}"
                )
            labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

        names = list(self.class_names)
        if labels is not None and labels.size and not names:
            names = default_class_names(int(labels.max()) + 1) if labels.max() >= 0 else []
        if len(set(names)) != len(names):
            raise BankFormatError("class_names contains duplicates")
        object.__setattr__(self, "class_names", names)

        if labels is not None and labels.size:
            bad = (labels != UNLABELED) & ((labels < 0) | (labels >= len(names)))
            if np.any(bad):
                raise LabelOutOfRange(
                    "labels outside [0, n_classes) and not -1",
                    bad_values=sorted(set(int(v) for v in labels[bad]))[:8],
                    n_classes=len(names),
                )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def has_labels(self) -> bool:
        return self.labels is not None

    def labeled_mask(self) -> np.ndarray:
        if self.labels is None:
            return np.zeros(self.n_samples, dtype=bool)
        return self.labels != UNLABELED


def rows_by_class(bank: FeatureBank) -> list[np.ndarray]:
    """Split a labeled bank into one float64 feature matrix per class.

    Used for template banks, where every class must have at least one row.
    """
    if bank.labels is None:
        raise BankFormatError("bank must be labeled to group rows by class")
    out = []
    for c in range(bank.n_classes):
        rows = bank.features[bank.labels == c]
        if rows.shape[0] == 0:
            raise BankFormatError(f"bank has no rows for class {c}")
        out.append(np.asarray(rows, dtype=np.float64))
    return out


NORM_EPS = 1e-12


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit Euclidean norm, in float64.

    Rows with norm below 1e-12 are returned as all-zero rather than
    divided by a vanishing norm.
    """
    arr = np.asarray(x, dtype=np.float64)
    mat = np.atleast_2d(arr)
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    out = mat / safe[:, None]
    out[norms <= NORM_EPS] = 0.0
    return out[0] if arr.ndim == 1 else out


def bank_equal(a: FeatureBank, b: FeatureBank) -> bool:
    """Bitwise equality of features, labels and metadata."""
    if a.features.shape != b.features.shape:
        return False
    if a.features.tobytes() != b.features.tobytes():
        return False
    if (a.labels is None) != (b.labels is None):
        return False
    if a.labels is not None and a.labels.tobytes() != b.labels.tobytes():
        return False
    return a.class_names == b.class_names and a.domain_name == b.domain_name


def save_bank(bank: FeatureBank, path: str) -> None:
    """Write the binary format plus the JSON metadata sidecar."""
    path = str(path)
    if path.endswith(".csv"):
        _save_csv(bank, path)
    else:
        _save_binary(bank, path)
    meta = {"class_names": bank.class_names, "domain_name": bank.domain_name}
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_bank(path: str) -> FeatureBank:
    """Read a bank written by :func:`save_bank` (binary or CSV)."""
    path = str(path)
    class_names, domain_name = _load_meta(path)
    if path.endswith(".csv"):
        features, labels = _load_csv(path)
    else:
        features, labels = _load_binary(path)
    return FeatureBank(
        features=features, labels=labels, class_names=class_names, domain_name=domain_name
    )


def _load_meta(path: str) -> tuple[list[str], str]:
    try:
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        return [], ""
    return list(meta.get("class_names", [])), str(meta.get("domain_name", ""))


def _save_binary(bank: FeatureBank, path: str) -> None:
    n, d = bank.features.shape
    has_labels = 1 if bank.labels is not None else 0
    header = MAGIC + struct.pack("<IIIB", VERSION, n, d, has_labels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bank.features.astype("<f4", copy=False).tobytes())
        if has_labels:
            fh.write(bank.labels.astype("<i4", copy=False).tobytes())


def _load_binary(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 4 + 13:
        raise Truncated(f"{path}: header truncated ({len(blob)} bytes)")
    version, n, d, has_labels = struct.unpack("<IIIB", blob[4:17])
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {VERSION}")
    if has_labels not in (0, 1):
        raise BankFormatError(f"{path}: bad label flag {has_labels}")
    need = 17 + n * d * 4 + (n * 4 if has_labels else 0)
    if len(blob) < need:
        raise Truncated(f"{path}: need {need} bytes, file has {len(blob)}")
    if len(blob) > need:
        raise BankFormatError(
            f"{path}: {len(blob) - need} trailing bytes after payload"
        )
    features = np.frombuffer(blob, dtype="<f4", count=n * d, offset=17).reshape(n, d)
    if not np.all(np.isfinite(features)):
        raise NonFiniteValues(f"{path}: features contain non-finite values")
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="<i4", count=n, offset=17 + n * d * 4)
    return features, labels


def _format_f32(v: np.float32) -> str:
    # Python float repr round-trips the exact float64 image of a float32,
    # so parsing back and casting to float32 is lossless.
    return repr(float(v))


def _save_csv(bank: FeatureBank, path: str) -> None:
    n, d = bank.features.shape
    cols = [f"d{i}" for i in range(d)]
    with_labels = bank.labels is not None
    if with_labels:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(n):
        row = [_format_f32(v) for v in bank.features[i]]
        if with_labels:
            row.append(str(int(bank.labels[i])))
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_csv(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise Truncated(f"{path}: empty csv")
    header = lines[0].split(",")
    with_labels = header and header[-1] == "label"
    dim_cols = header[:-1] if with_labels else header
    if dim_cols != [f"d{i}" for i in range(len(dim_cols))]:
        raise BankFormatError(f"{path}: bad csv header {lines[0]!r}")
    d = len(dim_cols)
    feats = []
    labels = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise Truncated(f"{path}: row has {len(parts)} fields, expected {len(header)}")
        try:
            feats.append([float(p) for p in parts[:d]])
            if with_labels:
                labels.append(int(parts[d]))
        except ValueError as exc:
            raise BankFormatError(f"{path}: unparseable row {ln!r}") from exc
    features = np.asarray(feats, dtype=np.float32).reshape(len(feats), d)
    if not np.all(np.isfinite(features)):
        raise NonFiniteValues(f"{path}: features contain non-finite values")
    return features, (np.asarray(labels, dtype=np.int32) if with_labels else None)
