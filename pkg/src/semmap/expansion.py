"""Open-set class expansion with one-vs-all scorers.

New place classes are learned from a handful of labeled feature vectors
(generic, class-independent activations of the base network) without
touching the base classifier.  Each scorer is an L2-regularized logistic
regression fitted by full-batch gradient descent with inverse-frequency
example weights, so a few dozen positives against thousands of negatives
still give a useful detector.

The scorer outputs are appended to the base likelihood and the whole vector
is renormalized, which shares the probability mass between base and
expansion classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCORE_CLIP = 1e-6
MODEL_FORMAT = "semmap-ova"
FEATURES_FORMAT = "semmap-features"
FORMAT_VERSION = 1


class DegenerateLikelihood(ValueError):
    pass


@dataclass
class TrainingConfig:
    learning_rate: float = 0.1
    l2: float = 1e-3
    iterations: int = 500
    balance: bool = True
    seed: int = 0


@dataclass
class TrainingSet:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = _as_matrix(self.positives, "positives")
        self.negatives = _as_matrix(self.negatives, "negatives")
        if self.positives.shape[1] != self.negatives.shape[1]:
            raise ValueError("positives and negatives differ in feature dimension")

    @property
    def dim(self) -> int:
        return self.positives.shape[1]


def _as_matrix(rows, what: str) -> np.ndarray:
    a = np.asarray(rows)
    if a.dtype != np.float32:
        a = a.astype(float)
    if a.ndim == 1 and a.size:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"training set needs at least one of {what}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite values in {what}")
    return a


@dataclass
class OneVsAllModel:
    target_label: int
    weights: np.ndarray
    bias: float
    target_name: str | None = None
    n_pos: int = 0
    n_neg: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def decision(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(
                f"feature dimension {x.shape[-1]} does not match model dimension {self.dim}")
        return x @ self.weights + self.bias

    def predict_proba(self, features) -> np.ndarray:
        return _sigmoid(self.decision(features))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "target_label": int(self.target_label),
            "target_name": self.target_name,
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "n_pos": int(self.n_pos),
            "n_neg": int(self.n_neg),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OneVsAllModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a one-vs-all model file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        w = np.array(d["weights"], dtype=float)
        if w.shape != (d["dim"],):
            raise ValueError("model weights do not match declared dimension")
        return cls(d["target_label"], w, float(d["bias"]), d.get("target_name"),
                   d.get("n_pos", 0), d.get("n_neg", 0), d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "OneVsAllModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sigmoid(z):
    # split on sign so exp never overflows
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_one_vs_all(data: TrainingSet, target: int, config: TrainingConfig | None = None,
                     catalog=None) -> OneVsAllModel:
    """Fit a binary scorer separating ``target`` from everything else.

    Features are standardized internally; the standardization is folded
    back into the returned weights so scoring works on raw features.  The
    optimizer is deterministic; ``config.seed`` is only recorded in the
    model metadata.

    Float32 inputs stay float32 throughout, which halves memory traffic on
    large feature matrices.
    """
    config = config or TrainingConfig()
    if catalog is not None and not catalog.is_expansion(target):
        raise ValueError(f"label index {target} is not an expansion label")

    pos, neg = data.positives, data.negatives
    dtype = np.float32 if (pos.dtype == np.float32 and neg.dtype == np.float32) else np.float64
    X = np.concatenate([pos, neg]).astype(dtype, copy=False)
    n_pos, n_neg = len(pos), len(neg)
    n = n_pos + n_neg
    y = np.concatenate([np.ones(n_pos), np.zeros(n_neg)])

    if config.balance:
        sw = np.where(y > 0, n / (2.0 * n_pos), n / (2.0 * n_neg))
    else:
        sw = np.ones(n)

    mu = X.mean(axis=0, dtype=np.float64)
    scale = X.std(axis=0, dtype=np.float64)
    scale[scale < 1e-12] = 1.0

    # w, b live in standardized coordinates: z = ((x - mu) / scale) @ w + b
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(config.iterations):
        v = w / scale
        z = (X @ v.astype(dtype)).astype(np.float64) + (b - mu @ v)
        r = sw * (_sigmoid(z) - y) / n
        xr = (X.T @ r.astype(dtype)).astype(np.float64)
        grad_w = (xr - mu * r.sum()) / scale + config.l2 * w
        grad_b = r.sum()
        w -= config.learning_rate * grad_w
        b -= config.learning_rate * grad_b

    weights = w / scale
    bias = float(b - mu @ weights)
    name = catalog.name(target) if catalog is not None else None
    meta = {"learning_rate": config.learning_rate, "l2": config.l2,
            "iterations": config.iterations, "balance": config.balance,
            "seed": config.seed}
    return OneVsAllModel(target, weights, bias, name, n_pos, n_neg, meta)


def score(model: OneVsAllModel, feature) -> float:
    f = np.asarray(feature, dtype=float)
    if f.ndim != 1:
        raise ValueError("score expects a single feature vector")
    return float(model.predict_proba(f))


def combine_likelihood(base, ova_scores=()) -> np.ndarray:
    """Concatenate base likelihood and one-vs-all scores, then renormalize.

    Scores are clipped away from 0 and 1 first.  An empty ``ova_scores``
    reduces to normalizing the base vector alone.
    """
    base = np.asarray(base, dtype=float)
    scores = np.asarray(ova_scores, dtype=float).reshape(-1)
    if base.ndim != 1 or base.size == 0:
        raise ValueError("base likelihood must be a non-empty vector")
    if np.any(~np.isfinite(base)) or np.any(base < 0) or np.any(base > 1):
        raise ValueError("base likelihood entries must lie in [0, 1]")
    if np.any(~np.isfinite(scores)) or np.any(scores < 0) or np.any(scores > 1):
        raise ValueError("one-vs-all scores must lie in [0, 1]")
    scores = np.clip(scores, SCORE_CLIP, 1.0 - SCORE_CLIP)
    joint = np.concatenate([base, scores])
    total = joint.sum()
    if total <= 0:
        raise DegenerateLikelihood("combined likelihood is all zero")
    return joint / total


def expanded_likelihood(base, models, feature, n_expansion: int) -> np.ndarray:
    """Combined likelihood for one frame, in catalog order.

    ``models`` maps expansion slot (0-based, after the base labels) to a
    scorer.  Without a feature vector the expansion entries are zero and
    only the base part is normalized.
    """
    base = np.asarray(base, dtype=float)
    if n_expansion == 0:
        return combine_likelihood(base)
    if feature is None or len(models) == 0:
        joint = np.concatenate([base, np.zeros(n_expansion)])
        total = joint.sum()
        if total <= 0:
            raise DegenerateLikelihood("base likelihood is all zero")
        return joint / total
    scores = np.empty(n_expansion)
    for slot in range(n_expansion):
        scores[slot] = score(models[slot], feature)
    return combine_likelihood(base, scores)


def mean_log_loss(model: OneVsAllModel, data: TrainingSet) -> float:
    p = np.clip(model.predict_proba(np.concatenate([data.positives, data.negatives])),
                1e-15, 1 - 1e-15)
    y = np.concatenate([np.ones(len(data.positives)), np.zeros(len(data.negatives))])
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def save_training_set(path, data: TrainingSet) -> None:
    with open(path, "w") as fh:
        fh.write(f"# format={FEATURES_FORMAT} version={FORMAT_VERSION} dim={data.dim}\n")
        for tag, rows in (("pos", data.positives), ("neg", data.negatives)):
            for row in rows:
                fh.write(tag + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_training_set(path) -> TrainingSet:
    """Read ``pos``/``neg`` tagged feature rows.

    The first line is a ``# format=... version=... dim=...`` header.
    """
    pos, neg = [], []
    dim = None
    with open(path) as fh:
        header = fh.readline()
        fields = dict(tok.split("=", 1) for tok in header.lstrip("#").split() if "=" in tok)
        if fields.get("format") != FEATURES_FORMAT:
            raise ValueError(f"{path}: missing '{FEATURES_FORMAT}' header")
        if int(fields.get("version", -1)) != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {fields.get('version')!r}")
        if "dim" in fields:
            dim = int(fields["dim"])
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tag, *vals = line.split(",")
            try:
                row = [float(v) for v in vals]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed feature row") from None
            if dim is not None and len(row) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} features, got {len(row)}")
            if tag == "pos":
                pos.append(row)
            elif tag == "neg":
                neg.append(row)
            else:
                raise ValueError(f"{path}:{lineno}: tag must be pos or neg, got {tag!r}")
    return TrainingSet(np.array(pos), np.array(neg))
