"""Per-aspect candidate generation, lambda-weighted reranking and assembly."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import textmodel as tm
from .ctr import extract_features, log_predict_ctr
from .errors import ConfigError, MissingAspect
from .segmenter import ASPECTS, Aspect, segment
from .trainer import CONTROL_TOKENS, CompositeParams, prefix_ids

ASPECT_FIELDS = {
    Aspect.LanguageAppeal: "language_appeal",
    Aspect.FactualInformation: "factual_information",
    Aspect.ProductDimensions: "product_dimensions",
    Aspect.UniqueAttributes: "unique_attributes",
    Aspect.BrandGuarantees: "brand_guarantees",
}


@dataclass(frozen=True)
class DecodeConfig:
    n_candidates: int = 8
    top_k: int = 20
    temperature: float = 1.0

    def __post_init__(self):
        if self.n_candidates < 1 or self.top_k < 1 or self.temperature <= 0:
            raise ConfigError("n_candidates and top_k must be >= 1, temperature > 0")


@dataclass(frozen=True)
class Candidate:
    aspect: Aspect
    ids: tuple
    text: str
    norm_loglik: float
    log_ctr: float
    lam: float
    index: int = 0

    @property
    def predicted_ctr(self) -> float:
        return float(np.exp(self.log_ctr))

    @property
    def composite_score(self) -> float:
        return self.lam * self.norm_loglik + (1.0 - self.lam) * self.log_ctr

    @property
    def empty(self) -> bool:
        return not self.text.strip()


def composite(norm_loglik, log_ctr, lam):
    return lam * norm_loglik + (1.0 - lam) * log_ctr


def rerank(candidates, lam):
    """Candidates re-scored under `lam`, best first; ties keep generation order."""
    rescored = [replace(c, lam=lam) for c in candidates]
    return sorted(rescored, key=lambda c: (-c.composite_score, c.index))


def derive_seed(seed, item_id, aspect):
    return int(np.random.SeedSequence([int(seed), zlib.crc32(item_id.encode("utf-8")),
                                       aspect.value]).generate_state(1)[0])


def banned_ids(vocab):
    return sorted({tm.PAD, tm.BOS, tm.UNK} | {vocab.id(t) for t in CONTROL_TOKENS if t in vocab})


def generate_aspect(params: CompositeParams, vocab, item, aspect, decode: DecodeConfig, lam,
                    seed, rules=None) -> list:
    """`decode.n_candidates` seeded samples for one aspect, best composite first.

    The prefix is the aspect control token plus the item title. The
    likelihood term is the candidate's log-probability divided by its
    generated length (EOS counted); an immediate EOS gives an empty candidate.
    """
    prefix = prefix_ids(vocab, aspect, item.title)
    gens, logps = tm.sample_batch(params.lm, prefix, decode.n_candidates, decode.temperature,
                                  decode.top_k, seed=seed, banned_ids=banned_ids(vocab),
                                  return_logprobs=True)
    cands = []
    for i, (gen, lp) in enumerate(zip(gens, logps)):
        body = gen[:-1] if gen and gen[-1] == tm.EOS else gen
        text = vocab.decode(body)
        norm = lp / max(len(gen), 1)
        log_ctr = log_predict_ctr(params.ctr, extract_features(text, segment(text, rules)))
        cands.append(Candidate(aspect, tuple(body), text, norm, log_ctr, lam, i))
    return rerank(cands, lam)


@dataclass(frozen=True)
class EnhancedDescription:
    item_id: str
    texts: tuple
    assembled: str
    lam: float
    seed: int
    manifest_hash: str
    scores: tuple = ()
    empty_reasons: tuple = ()

    @property
    def display_score(self) -> float:
        """Mean composite score of the chosen candidates; ranks items for NDCG."""
        return float(np.mean(self.scores)) if self.scores else float("-inf")

    def to_record(self, config_hash="") -> dict:
        rec = {"item_id": self.item_id}
        for aspect, text in zip(ASPECTS, self.texts):
            rec[ASPECT_FIELDS[aspect]] = text
        rec.update(assembled=self.assembled, **{"lambda": self.lam}, seed=self.seed,
                   manifest_hash=self.manifest_hash, scores=list(self.scores),
                   empty_reasons=list(self.empty_reasons))
        if config_hash:
            rec["config_hash"] = config_hash
        return rec

    @classmethod
    def from_record(cls, rec):
        return cls(rec["item_id"], tuple(rec[ASPECT_FIELDS[a]] for a in ASPECTS), rec["assembled"],
                   rec["lambda"], rec["seed"], rec["manifest_hash"], tuple(rec.get("scores", ())),
                   tuple(rec.get("empty_reasons", ())))


def assemble(choices, item, lam=None, seed=0, manifest_hash="") -> EnhancedDescription:
    """Join one chosen candidate per aspect in canonical order, single-spaced.

    Empty slots are kept (with a recorded reason) and skipped in the join.
    """
    by_aspect = {c.aspect: c for c in choices}
    for aspect in ASPECTS:
        if aspect not in by_aspect:
            raise MissingAspect(aspect.name)
    ordered = [by_aspect[a] for a in ASPECTS]
    texts = tuple(c.text.strip() for c in ordered)
    reasons = tuple("" if t else "empty generation" for t in texts)
    if lam is None:
        lam = ordered[0].lam
    return EnhancedDescription(
        item_id=item.item_id, texts=texts, assembled=" ".join(t for t in texts if t),
        lam=lam, seed=seed, manifest_hash=manifest_hash,
        scores=tuple(c.composite_score for c in ordered), empty_reasons=reasons)


def generate_all(params, vocab, item, decode, lam, seed, rules=None) -> dict:
    return {a: generate_aspect(params, vocab, item, a, decode, lam,
                               derive_seed(seed, item.item_id, a), rules)
            for a in ASPECTS}


def choose(candidates_by_aspect: dict, lam) -> list:
    return [rerank(candidates_by_aspect[a], lam)[0] for a in ASPECTS]


def enhance_item(params, vocab, item, lam, decode: DecodeConfig = DecodeConfig(), seed=0,
                 manifest_hash="", rules=None) -> EnhancedDescription:
    cands = generate_all(params, vocab, item, decode, lam, seed, rules)
    return assemble(choose(cands, lam), item, lam, seed, manifest_hash)


def description_score(params, vocab, item, text, lam, rules=None) -> float:
    """Composite score of an existing description, averaged over its aspects.

    Each non-empty aspect is scored as if it were a candidate continuation
    of the aspect prefix; a description with no aspect text scores -inf.
    """
    bundle = segment(text, rules)
    scores = []
    for aspect in ASPECTS:
        part = bundle.text(aspect)
        if not part:
            continue
        prefix = prefix_ids(vocab, aspect, item.title)
        body = vocab.encode(part)
        ids = (prefix + body + [tm.EOS])[: params.lm.context_len]
        gen_len = len(ids) - len(prefix)
        if gen_len < 1:
            continue
        lp = tm.sequence_logprob(params.lm, ids, len(prefix))
        log_ctr = log_predict_ctr(params.ctr, extract_features(part, segment(part, rules)))
        scores.append(composite(lp / gen_len, log_ctr, lam))
    return float(np.mean(scores)) if scores else float("-inf")


def write_enhanced(path, outputs, config_hash=""):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in sorted(outputs, key=lambda e: e.item_id):
            rec = e.to_record(config_hash)
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_enhanced(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [EnhancedDescription.from_record(json.loads(ln)) for ln in fh if ln.strip()]
