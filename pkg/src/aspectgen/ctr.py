"""Description features and a logistic-regression click-through-rate model."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, Diverged, EmptyBatch
from .segmenter import ASPECTS, AspectBundle, appeal_lexicon, coverage_vector
from .textmodel import word_tokens

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "token_count",
    "mean_word_length",
    "cover_language_appeal",
    "cover_factual_information",
    "cover_product_dimensions",
    "cover_unique_attributes",
    "cover_brand_guarantees",
    "appeal_lexicon_hits",
    "numeric_token_count",
    "guarantee_keyword_flag",
)
N_FEATURES = len(FEATURE_NAMES)
CHECKPOINT_VERSION = "ctr-v1"

_GUARANTEE_RE = re.compile(
    r"\b(?:warrant(?:y|ies|ied)|guarantee[sd]?|only at|exclusive(?:ly)?|money[- ]back)\b",
    re.IGNORECASE)


def extract_features(description: str, bundle: AspectBundle) -> np.ndarray:
    """Raw 10-component feature vector in the fixed FEATURE_NAMES order."""
    words = word_tokens(description)
    lex = appeal_lexicon()
    x = np.zeros(N_FEATURES)
    x[0] = len(words)
    x[1] = sum(len(w) for w in words) / len(words) if words else 0.0
    x[2:7] = coverage_vector(bundle)
    x[7] = sum(1 for w in words if w in lex)
    x[8] = sum(1 for w in words if any(ch.isdigit() for ch in w))
    x[9] = 1.0 if _GUARANTEE_RE.search(description) else 0.0
    return x


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z):
    """log(sigmoid(z)) without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return -np.logaddexp(0.0, -z)


@dataclass(frozen=True)
class CtrExample:
    features: np.ndarray
    label: float

    def __post_init__(self):
        if not 0.0 <= self.label <= 1.0:
            raise ValueError("label must lie in [0, 1]")


@dataclass
class CtrModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        self.bias = float(self.bias)
        if self.zero_variance is None:
            self.zero_variance = np.zeros(len(self.weights), dtype=bool)
        if np.any(self.std <= 0):
            raise ValueError("feature standard deviations must be positive")

    @classmethod
    def fit_stats(cls, examples, init_scale=0.0, seed=0):
        """Zero-initialized model whose normalization comes from `examples`."""
        X = np.stack([e.features for e in examples])
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        flat = std <= 1e-12
        std = np.where(flat, 1.0, std)
        w = np.zeros(X.shape[1])
        if init_scale > 0:
            w = np.random.default_rng(seed).normal(0.0, init_scale, size=X.shape[1])
        return cls(w, 0.0, mean, std, flat)

    def normalize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def copy(self):
        return CtrModel(self.weights.copy(), self.bias, self.mean.copy(), self.std.copy(),
                        self.zero_variance.copy())

    def __eq__(self, other):
        return (isinstance(other, CtrModel) and self.bias == other.bias
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std))

    def dumps(self) -> str:
        lines = [CHECKPOINT_VERSION]
        lines += [repr(float(w)) for w in self.weights]
        lines.append(repr(self.bias))
        lines += [f"{float(m)!r} {float(s)!r}" for m, s in zip(self.mean, self.std)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str):
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        if not lines or lines[0] != CHECKPOINT_VERSION or len(lines) != 2 + 2 * N_FEATURES:
            raise DataError("not a CTR checkpoint")
        w = [float(v) for v in lines[1:1 + N_FEATURES]]
        b = float(lines[1 + N_FEATURES])
        stats = [tuple(map(float, ln.split())) for ln in lines[2 + N_FEATURES:]]
        mean = [m for m, _ in stats]
        std = [s for _, s in stats]
        return cls(w, b, mean, std)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def ctr_score(model: CtrModel, X) -> np.ndarray:
    """Affine score w . normalize(x) + b for each row of X."""
    return model.normalize(X) @ model.weights + model.bias


def predict_ctr(model: CtrModel, x) -> float:
    """sigmoid(w . normalize(x) + b)."""
    z = ctr_score(model, np.atleast_2d(x))
    y = sigmoid(z)
    # keep strictly inside (0, 1) when the affine score saturates
    y = np.clip(y, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return float(y[0])


def log_predict_ctr(model: CtrModel, x) -> float:
    return float(log_sigmoid(ctr_score(model, np.atleast_2d(x)))[0])


def ctr_loss(model: CtrModel, batch):
    """Summed binary cross-entropy over `batch` and its gradient (dw, db).

    Computed from the affine score with log-sigmoid terms, so soft labels
    and saturated scores stay finite.
    """
    if not batch:
        raise EmptyBatch("ctr_loss needs at least one example")
    X = model.normalize(np.stack([e.features for e in batch]))
    y = np.array([e.label for e in batch])
    z = X @ model.weights + model.bias
    loss = -float(np.sum(y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z)))
    r = sigmoid(z) - y
    return loss, X.T @ r, float(np.sum(r))


def train_ctr(examples, epochs: int = 500, learning_rate: float = 0.5, l2: float = 1e-4,
              seed: int = 0, init_scale: float = 0.0, binarize_at=None) -> CtrModel:
    """Full-batch gradient descent on summed BCE plus l2 * ||w||^2.

    The step is divided by the batch size. Whenever a step fails to lower the
    objective the learning rate is halved and the step retried, at most 20
    times; after that training stops at the current point.
    """
    examples = list(examples)
    if len(examples) < 2:
        raise EmptyBatch("train_ctr needs at least two examples")
    if binarize_at is not None:
        examples = [CtrExample(e.features, 1.0 if e.label >= binarize_at else 0.0)
                    for e in examples]
    labels = np.array([e.label for e in examples])
    if binarize_at is not None and not (np.any(labels < 0.5) and np.any(labels >= 0.5)):
        log.warning("binarized CTR labels are all %d", int(labels[0]))
    model = CtrModel.fit_stats(examples, init_scale=init_scale, seed=seed)
    n = len(examples)

    def objective(m):
        loss, gw, gb = ctr_loss(m, examples)
        return loss + l2 * float(m.weights @ m.weights), gw + 2 * l2 * m.weights, gb

    lr = learning_rate
    cur, gw, gb = objective(model)
    for _ in range(epochs):
        for _halving in range(21):
            trial = model.copy()
            trial.weights = model.weights - lr * gw / n
            trial.bias = model.bias - lr * gb / n
            new, ngw, ngb = objective(trial)
            if np.isfinite(new) and new <= cur:
                break
            lr *= 0.5
        else:
            if not np.isfinite(new):
                raise Diverged("CTR loss is not finite after 20 learning-rate halvings")
            break
        model, cur, gw, gb = trial, new, ngw, ngb
    return model
