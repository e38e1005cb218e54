"""Run configuration and the end-to-end stages wired together by the CLI."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import statistics
import tempfile
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from . import textmodel as tm
from .assembler import (DecodeConfig, assemble, choose, description_score, enhance_item,
                        generate_all, write_enhanced)
from .corpus import dataset_hash, load_dataset, split_by_engagement
from .ctr import train_ctr
from .errors import ConfigError, DataError, EvalError
from .evalsuite import build_index, build_report, item_alignment_score, load_ratings
from .segmenter import ASPECTS, AspectRuleSet, default_rules, segment
from .trainer import (CONTROL_TOKENS, CompositeParams, TrainerConfig, ctr_example_for,
                      load_checkpoint, make_samples, save_checkpoint, train)

log = logging.getLogger(__name__)

PATH_KEYS = ("dataset", "rules", "out", "ratings", "checkpoint")


def bundled_corpus_path() -> str:
    return str(resources.files("aspectgen").joinpath("data/synthetic_corpus.jsonl"))


def bundled_rules_path() -> str:
    return str(resources.files("aspectgen").joinpath("data/default_rules.tsv"))


@dataclass
class RunConfig:
    # paths
    dataset: str = ""
    rules: str = ""
    out: str = "run"
    ratings: str = ""
    checkpoint: str = ""
    # training
    seed: int = 0
    lam: float = 0.429
    epochs: int = 40
    learning_rate_lm: float = 0.2
    learning_rate_ctr: float = 0.05
    batch_size: int = 8
    clip_norm: float = 5.0
    # language model
    d_e: int = 64
    heads: int = 2
    context_len: int = 128
    vocab_cap: int = 8192
    min_frequency: int = 1
    init_std: float = 0.02
    # ctr model
    ctr_epochs: int = 500
    ctr_learning_rate: float = 0.5
    ctr_l2: float = 1e-4
    ctr_binarize_at: float = -1.0
    # decoding
    n_candidates: int = 8
    top_k: int = 20
    temperature: float = 1.0
    # evaluation
    k1: float = 1.2
    b: float = 0.75
    ndcg_k: int = 10
    # ablation
    grid_start: float = 0.0
    grid_stop: float = 1.0
    grid_step: float = 0.05
    grid: str = ""
    seeds_per_point: int = 5
    ablate_mode: str = "rerank"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.seeds_per_point < 1:
            raise ConfigError("seeds_per_point must be >= 1")
        if self.ablate_mode not in ("rerank", "retrain"):
            raise ConfigError(f"ablate_mode must be rerank or retrain, got {self.ablate_mode!r}")
        if any(not 0.0 <= g <= 1.0 for g in self.lambda_grid()):
            raise ConfigError("ablation grid values must lie in [0, 1]")
        if self.d_e % self.heads:
            raise ConfigError("d_e must be divisible by heads")

    # "lambda" is the public key name; `lam` is the attribute
    @staticmethod
    def _key(name):
        return "lambda" if name == "lam" else name

    @classmethod
    def field_names(cls):
        return [cls._key(f.name) for f in fields(cls)]

    def with_overrides(self, pairs: dict) -> "RunConfig":
        current = dataclasses.asdict(self)
        types = {f.name: type(getattr(self, f.name)) for f in fields(self)}
        for key, raw in pairs.items():
            name = "lam" if key == "lambda" else key.replace("-", "_")
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                current[name] = types[name](raw)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return RunConfig(**current)

    @classmethod
    def from_file(cls, path, base=None) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        pairs = {}
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            pairs[k.strip()] = v.strip()
        return (base or cls()).with_overrides(pairs)

    def dumps(self) -> str:
        return "".join(f"{self._key(f.name)}={getattr(self, f.name)}\n" for f in fields(self))

    def lambda_grid(self) -> list:
        if self.grid:
            try:
                return [float(v) for v in self.grid.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"bad grid {self.grid!r}") from None
        n = int(round((self.grid_stop - self.grid_start) / self.grid_step))
        return [round(self.grid_start + i * self.grid_step, 10) for i in range(n + 1)]

    def trainer_config(self, lam=None, seed=None) -> TrainerConfig:
        return TrainerConfig(lam=self.lam if lam is None else lam, epochs=self.epochs,
                             learning_rate_lm=self.learning_rate_lm,
                             learning_rate_ctr=self.learning_rate_ctr, batch_size=self.batch_size,
                             seed=self.seed if seed is None else seed, clip_norm=self.clip_norm)

    def lm_config(self, seed=None) -> tm.LmConfig:
        return tm.LmConfig(d_e=self.d_e, heads=self.heads, context_len=self.context_len,
                           vocab_cap=self.vocab_cap, seed=self.seed if seed is None else seed,
                           init_std=self.init_std)

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(self.n_candidates, self.top_k, self.temperature)

    def dataset_path(self):
        return self.dataset or bundled_corpus_path()

    def rules_path(self):
        return self.rules or bundled_rules_path()

    def checkpoint_dir(self):
        return self.checkpoint or os.path.join(self.out, "checkpoint")


# ----------------------------------------------------------------------------
# helpers

def atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Run:
    """Loaded inputs for one configuration, plus the hash that labels its outputs."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.items = load_dataset(cfg.dataset_path())
        self.rules = AspectRuleSet.load(cfg.rules_path()) if cfg.rules else default_rules()
        self.split = split_by_engagement(self.items)
        self.corpus_hash = dataset_hash(self.items)
        hashed = {k: v for k, v in dataclasses.asdict(cfg).items() if k not in PATH_KEYS}
        hashed["corpus_hash"] = self.corpus_hash
        hashed["rules_hash"] = _sha(self.rules.dumps())
        self.config_hash = _sha(json.dumps(hashed, sort_keys=True))

    def path(self, *parts):
        return os.path.join(self.cfg.out, *parts)

    def reference_index(self):
        train = self.split.train
        return build_index([it.description for it in train], self.cfg.k1, self.cfg.b,
                           doc_ids=[it.item_id for it in train],
                           categories=[it.category for it in train])


def stage_ingest(run: Run):
    flagged = [it.item_id for it in run.items if it.lackluster]
    summary = dict(items=len(run.items), empty_descriptions=len(flagged),
                   corpus_hash=run.corpus_hash, config_hash=run.config_hash)
    atomic_write(run.path("ingest.json"), json.dumps(dict(summary, flagged=flagged), indent=2,
                                                    sort_keys=True) + "\n")
    return summary


def stage_split(run: Run):
    s = run.split
    doc = dict(median_ctr=s.median_ctr, train=[it.item_id for it in s.train],
               test=[it.item_id for it in s.test], config_hash=run.config_hash)
    atomic_write(run.path("split.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return s


def stage_segment(run: Run):
    lines = []
    for it in run.items:
        b = segment(it.description, run.rules)
        seg = b.segments
        rec = {"item_id": it.item_id, "residual": b.residual, "config_hash": run.config_hash}
        rec.update({a.name: seg[a] for a in ASPECTS})
        lines.append(json.dumps(rec, ensure_ascii=False, sort_keys=True))
    atomic_write(run.path("segments.jsonl"), "\n".join(lines) + "\n")


def stage_train_ctr(run: Run):
    cfg = run.cfg
    examples = [ctr_example_for(it.description, it.ctr, run.rules) for it in run.items]
    model = train_ctr(examples, epochs=cfg.ctr_epochs, learning_rate=cfg.ctr_learning_rate,
                      l2=cfg.ctr_l2, seed=cfg.seed,
                      binarize_at=cfg.ctr_binarize_at if cfg.ctr_binarize_at >= 0 else None)
    atomic_write(run.path("ctr_base.txt"), f"# config_hash={run.config_hash}\n" + model.dumps())
    return model


def build_vocabulary(run: Run) -> tm.Vocabulary:
    corpus = [it.description for it in run.split.train] + [it.title for it in run.items]
    return tm.build_vocab(corpus, run.cfg.lm_config(), run.cfg.min_frequency,
                          specials=CONTROL_TOKENS)


def train_composite(run: Run, ctr_model, lam, seed):
    cfg = run.cfg
    vocab = build_vocabulary(run)
    samples = make_samples(run.split.train, run.split.test, vocab, cfg.context_len, run.rules)
    init = CompositeParams(tm.LmParams.init(len(vocab), cfg.lm_config(seed)), ctr_model.copy())
    params, trace = train(samples, cfg.trainer_config(lam, seed), init)
    return params, vocab, trace


def stage_train(run: Run, ctr_model=None):
    cfg = run.cfg
    if ctr_model is None:
        ctr_model = stage_train_ctr(run)
    params, vocab, trace = train_composite(run, ctr_model, cfg.lam, cfg.seed)
    manifest = {"lambda": cfg.lam, "seed": cfg.seed, "epochs": cfg.epochs,
                "corpus_hash": run.corpus_hash, "config_hash": run.config_hash}
    manifest_hash = save_checkpoint(run.path("checkpoint"), params, vocab, manifest)
    buf = io.StringIO()
    buf.write(f"# config_hash={run.config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "total", "nll", "ctr", "nll_per_token"])
    for row in trace:
        w.writerow([row["epoch"], repr(row["total"]), repr(row["nll"]), repr(row["ctr"]),
                    repr(row["nll_per_token"])])
    atomic_write(run.path("trace.csv"), buf.getvalue())
    return params, vocab, manifest_hash


def _load_model(run: Run):
    ckpt = run.cfg.checkpoint_dir()
    if not os.path.exists(os.path.join(ckpt, "manifest.json")):
        raise DataError(f"no checkpoint at {ckpt}; run `train` first")
    params, vocab, _, manifest_hash = load_checkpoint(ckpt)
    return params, vocab, manifest_hash


def stage_generate(run: Run, params=None, vocab=None, manifest_hash=None):
    cfg = run.cfg
    if params is None:
        params, vocab, manifest_hash = _load_model(run)
    decode = cfg.decode_config()
    outputs = [enhance_item(params, vocab, it, cfg.lam, decode, cfg.seed, manifest_hash, run.rules)
               for it in run.split.test]
    tmp = run.path("enhanced.jsonl")
    os.makedirs(cfg.out, exist_ok=True)
    write_enhanced(tmp + ".part", outputs, run.config_hash)
    os.replace(tmp + ".part", tmp)
    return outputs


def stage_evaluate(run: Run, outputs=None, params=None, vocab=None, manifest_hash=None):
    from .assembler import read_enhanced

    cfg = run.cfg
    if outputs is None:
        path = run.path("enhanced.jsonl")
        if not os.path.exists(path):
            raise EvalError(f"no enhanced outputs at {path}; run `generate` first")
        outputs = read_enhanced(path)
    ratings = load_ratings(cfg.ratings) if cfg.ratings else []
    display = {}
    if ratings:
        if params is None:
            params, vocab, manifest_hash = _load_model(run)
        for it in run.split.train:
            display[("reference", it.item_id)] = description_score(
                params, vocab, it, it.description, cfg.lam, run.rules)
        for it in run.split.test:
            display[("original", it.item_id)] = description_score(
                params, vocab, it, it.description, cfg.lam, run.rules)
        for e in outputs:
            display[("enhanced", e.item_id)] = e.display_score
    meta = {"lambda": repr(cfg.lam), "seed": str(cfg.seed), "config_hash": run.config_hash,
            "manifest_hash": manifest_hash or (outputs[0].manifest_hash if outputs else ""),
            "corpus_hash": run.corpus_hash}
    report = build_report(run.split, outputs, run.reference_index(), ratings, display,
                          cfg.ndcg_k, meta)
    atomic_write(run.path("report.txt"), report.dumps())
    atomic_write(run.path("per_item.csv"), report.per_item_csv())
    return report


def cmd_pipeline(cfg: RunConfig):
    """split -> segment -> train CTR -> train composite -> enhance test split -> evaluate."""
    run = Run(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    atomic_write(run.path("config.txt"), f"# config_hash={run.config_hash}\n" + cfg.dumps())
    stage_ingest(run)
    stage_split(run)
    stage_segment(run)
    ctr_model = stage_train_ctr(run)
    params, vocab, manifest_hash = stage_train(run, ctr_model)
    outputs = stage_generate(run, params, vocab, manifest_hash)
    return stage_evaluate(run, outputs, params, vocab, manifest_hash)


# ----------------------------------------------------------------------------
# ablation

@dataclass
class AblationRow:
    lam: float
    mean: float
    std: float
    values: list


def point_seed(base_seed, j):
    return int(np.random.SeedSequence([int(base_seed), 7919, j]).generate_state(1)[0])


def _mean_alignment(run, index, outputs):
    by_id = {e.item_id: e for e in outputs}
    vals = [item_alignment_score(index, by_id[it.item_id].assembled, it) for it in run.split.test]
    return float(np.mean(vals))


def _rows(grid, per_lambda):
    rows = []
    for lam in grid:
        vals = per_lambda[lam]
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        rows.append(AblationRow(lam, statistics.fmean(vals), std, list(vals)))
    return rows


def cmd_ablate(cfg: RunConfig, mode=None):
    """Mean BM25 of enhanced test items at each lambda, over several seeds.

    rerank: one fixed checkpoint; per seed the candidates are drawn once and
    re-scored at every lambda. retrain: a fresh composite model per
    (lambda, seed). Seed j is shared by every lambda in both modes.
    """
    mode = mode or cfg.ablate_mode
    run = Run(cfg)
    grid = cfg.lambda_grid()
    index = run.reference_index()
    decode = cfg.decode_config()
    seeds = [point_seed(cfg.seed, j) for j in range(cfg.seeds_per_point)]
    per_lambda = {lam: [] for lam in grid}
    if mode == "rerank":
        params, vocab, manifest_hash = _load_model(run)
        for s in seeds:
            cands = {it.item_id: generate_all(params, vocab, it, decode, cfg.lam, s, run.rules)
                     for it in run.split.test}
            for lam in grid:
                outs = [assemble(choose(cands[it.item_id], lam), it, lam, s, manifest_hash)
                        for it in run.split.test]
                per_lambda[lam].append(_mean_alignment(run, index, outs))
    elif mode == "retrain":
        ctr_model = stage_train_ctr(run)
        for lam in grid:
            for s in seeds:
                params, vocab, _ = train_composite(run, ctr_model, lam, s)
                outs = [enhance_item(params, vocab, it, lam, decode, s, "", run.rules)
                        for it in run.split.test]
                per_lambda[lam].append(_mean_alignment(run, index, outs))
    else:
        raise ConfigError(f"unknown ablation mode {mode!r}")
    rows = _rows(grid, per_lambda)
    atomic_write(run.path("ablation.csv"), ablation_csv(rows, run.config_hash, mode))
    return rows


def ablation_csv(rows, config_hash="", mode="") -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash} mode={mode}\n")
    w = csv.writer(buf, lineterminator="\n")
    n = max((len(r.values) for r in rows), default=0)
    w.writerow(["lambda", "mean", "std"] + [f"seed_{j}" for j in range(n)])
    for r in rows:
        w.writerow([repr(r.lam), repr(r.mean), repr(r.std)] + [repr(v) for v in r.values])
    return buf.getvalue()


def read_ablation_csv(path) -> list:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if header[:3] != ["lambda", "mean", "std"]:
        raise EvalError(f"{path}: not an ablation table")
    return [AblationRow(float(r[0]), float(r[1]), float(r[2]), [float(v) for v in r[3:]])
            for r in reader]
