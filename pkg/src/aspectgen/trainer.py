"""Joint training of the language model and the CTR model under

    L = lam * sum(NLL) + (1 - lam) * sum(BCE)

The two parameter blocks are disjoint, so lam scales each block's gradient.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import textmodel as tm
from .ctr import CtrExample, CtrModel, ctr_loss, extract_features
from .errors import ConfigError, Diverged, EmptyBatch
from .segmenter import ASPECTS, Aspect, segment

SEP = "<sep>"
CONTROL_TOKENS = tuple(a.control_token for a in ASPECTS) + (SEP,)
MAX_TITLE_TOKENS = 24
DEFAULT_LAMBDA = 0.429


@dataclass
class CompositeParams:
    lm: tm.LmParams
    ctr: CtrModel

    def copy(self):
        return CompositeParams(self.lm.copy(), self.ctr.copy())


@dataclass(frozen=True)
class TrainerConfig:
    lam: float = DEFAULT_LAMBDA
    epochs: int = 40
    learning_rate_lm: float = 0.2
    learning_rate_ctr: float = 0.05
    batch_size: int = 8
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate_lm <= 0 or self.learning_rate_ctr <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning rates and clip norm must be positive")


@dataclass(frozen=True)
class TrainingSample:
    """Aspect sequences of one item plus that item's CTR example.

    Low-engagement items enter with no sequences: they only feed the CTR
    term as negatives.
    """
    item_id: str
    sequences: tuple
    ctr_example: CtrExample


@dataclass
class CompositeLoss:
    value: float
    nll: float
    ctr: float
    n_tokens: int
    grad_lm: tm.LmParams
    grad_w: np.ndarray
    grad_b: float


def prefix_ids(vocab: tm.Vocabulary, aspect: Aspect, title: str) -> list:
    """BOS, aspect control token, title tokens, SEP."""
    title_ids = vocab.encode(title)[:MAX_TITLE_TOKENS]
    return [tm.BOS, vocab.id(aspect.control_token), *title_ids, vocab.id(SEP)]


def aspect_sequence(vocab, aspect, title, text, context_len) -> tm.TokenSequence:
    ids = prefix_ids(vocab, aspect, title) + vocab.encode(text)
    ids = ids[: context_len - 1]
    return tm.TokenSequence((*ids, tm.EOS))


def ctr_example_for(text: str, label: float, rules=None) -> CtrExample:
    return CtrExample(extract_features(text, segment(text, rules)), label)


def make_samples(positives, negatives, vocab, context_len, rules=None) -> list:
    """One TrainingSample per item; only `positives` contribute sequences."""
    samples = []
    for item in positives:
        bundle = segment(item.description, rules)
        seqs = tuple((a, aspect_sequence(vocab, a, item.title, bundle.text(a), context_len))
                     for a in ASPECTS if bundle.segments[a])
        ex = CtrExample(extract_features(item.description, bundle), item.ctr)
        samples.append(TrainingSample(item.item_id, seqs, ex))
    for item in negatives:
        samples.append(TrainingSample(item.item_id, (), ctr_example_for(item.description, item.ctr,
                                                                         rules)))
    return samples


def composite_loss(params: CompositeParams, batch, lam: float) -> CompositeLoss:
    if not batch:
        raise EmptyBatch("composite_loss needs a non-empty batch")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    seqs = [s for sample in batch for _, s in sample.sequences]
    if seqs:
        nll, g_lm, n_tok = tm.nll_loss_batch(params.lm, seqs)
    else:
        nll, g_lm, n_tok = 0.0, params.lm.zeros_like(), 0
    closs, gw, gb = ctr_loss(params.ctr, [s.ctr_example for s in batch])
    return CompositeLoss(
        value=lam * nll + (1.0 - lam) * closs,
        nll=nll, ctr=closs, n_tokens=n_tok,
        grad_lm=g_lm.scaled(lam), grad_w=(1.0 - lam) * gw, grad_b=(1.0 - lam) * gb,
    )


def _clip(scale_norm, clip):
    return 1.0 if scale_norm <= clip else clip / scale_norm


def train(samples, config: TrainerConfig, init: CompositeParams):
    """Mini-batch gradient descent with per-block gradient-norm clipping.

    Returns (params, trace); trace has one dict per epoch with the summed
    total, NLL and CTR losses seen during that epoch and the per-token NLL.
    """
    samples = list(samples)
    if not samples:
        raise EmptyBatch("no training samples")
    params = init.copy()
    rng = np.random.default_rng(config.seed)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        tot = nll = ctr = 0.0
        n_tok = 0
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start:start + config.batch_size]]
            res = composite_loss(params, batch, config.lam)
            if not np.isfinite(res.value):
                raise Diverged(f"non-finite composite loss in epoch {epoch + 1}")
            tot += res.value
            nll += res.nll
            ctr += res.ctr
            n_tok += res.n_tokens
            s_lm = _clip(res.grad_lm.norm(), config.clip_norm)
            for k, a in params.lm.arrays.items():
                a -= (config.learning_rate_lm * s_lm) * res.grad_lm.arrays[k]
            s_ctr = _clip(float(np.sqrt(res.grad_w @ res.grad_w + res.grad_b ** 2)),
                          config.clip_norm)
            step = config.learning_rate_ctr * s_ctr
            params.ctr.weights = params.ctr.weights - step * res.grad_w
            params.ctr.bias = params.ctr.bias - step * res.grad_b
        if not (params.lm.is_finite() and np.all(np.isfinite(params.ctr.weights))):
            raise Diverged(f"non-finite parameters after epoch {epoch + 1}")
        trace.append(dict(epoch=epoch + 1, total=tot, nll=nll, ctr=ctr,
                          nll_per_token=nll / n_tok if n_tok else 0.0))
    return params, trace


def _lm_coords(params, rng, per_array):
    for name in tm.PARAM_NAMES:
        a = params.lm.arrays[name]
        for flat in rng.choice(a.size, size=min(per_array, a.size), replace=False):
            yield name, np.unravel_index(int(flat), a.shape)


def grad_check(params: CompositeParams, batch, lam, step=1e-5, samples_per_block=20, seed=0,
               floor=1e-8) -> dict:
    """Analytic vs central-difference gradient at randomly chosen coordinates.

    The LM block is probed at `samples_per_block` coordinates of every named
    array; the CTR block at that many of its weights plus the bias. Relative
    error is |a - n| / max(|a|, |n|, floor). Returns the worst error and the
    largest |numeric| value per block.
    """
    rng = np.random.default_rng(seed)
    res = composite_loss(params, batch, lam)
    p = params.copy()

    def value():
        return composite_loss(p, batch, lam).value

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), floor)

    report = {"lm": 0.0, "ctr": 0.0, "lm_max_abs_numeric": 0.0, "ctr_max_abs_numeric": 0.0,
              "lm_count": 0, "ctr_count": 0}
    for name, idx in _lm_coords(p, rng, samples_per_block):
        arr = p.lm.arrays[name]
        old = arr[idx]
        arr[idx] = old + step
        up = value()
        arr[idx] = old - step
        down = value()
        arr[idx] = old
        num = (up - down) / (2 * step)
        report["lm"] = max(report["lm"], rel(res.grad_lm.arrays[name][idx], num))
        report["lm_max_abs_numeric"] = max(report["lm_max_abs_numeric"], abs(num))
        report["lm_count"] += 1
    n_w = len(p.ctr.weights)
    coords = list(rng.choice(n_w, size=min(samples_per_block, n_w), replace=False)) + ["bias"]
    for c in coords:
        if c == "bias":
            old = p.ctr.bias
            p.ctr.bias = old + step
            up = value()
            p.ctr.bias = old - step
            down = value()
            p.ctr.bias = old
            analytic = res.grad_b
        else:
            w = p.ctr.weights
            old = w[c]
            w[c] = old + step
            up = value()
            w[c] = old - step
            down = value()
            w[c] = old
            analytic = res.grad_w[c]
        num = (up - down) / (2 * step)
        report["ctr"] = max(report["ctr"], rel(analytic, num))
        report["ctr_max_abs_numeric"] = max(report["ctr_max_abs_numeric"], abs(num))
        report["ctr_count"] += 1
    return report


# ----------------------------------------------------------------------------
# checkpoints

def _file_sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def save_checkpoint(directory, params: CompositeParams, vocab: tm.Vocabulary, manifest: dict):
    """Write lm.bin, vocab.txt, ctr.txt and manifest.json; returns the manifest hash."""
    os.makedirs(directory, exist_ok=True)
    params.lm.save(os.path.join(directory, "lm.bin"))
    vocab.save(os.path.join(directory, "vocab.txt"))
    params.ctr.save(os.path.join(directory, "ctr.txt"))
    full = dict(manifest)
    full["files"] = {f: _file_sha(os.path.join(directory, f))
                     for f in ("lm.bin", "vocab.txt", "ctr.txt")}
    text = json.dumps(full, indent=2, sort_keys=True) + "\n"
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_checkpoint(directory):
    """Returns (params, vocab, manifest, manifest_hash)."""
    lm = tm.LmParams.load(os.path.join(directory, "lm.bin"))
    vocab = tm.Vocabulary.load(os.path.join(directory, "vocab.txt"))
    ctr = CtrModel.load(os.path.join(directory, "ctr.txt"))
    with open(os.path.join(directory, "manifest.json"), "rb") as fh:
        raw = fh.read()
    return CompositeParams(lm, ctr), vocab, json.loads(raw), hashlib.sha256(raw).hexdigest()


def config_dict(config: TrainerConfig) -> dict:
    return asdict(config)
