"""Okapi BM25 alignment and rating-based NDCG@k, aggregated into cohort reports."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .errors import (DataError, EmptyRanking, EmptyReferenceSet, EvalError, InconsistentIds,
                     MissingRating, UnknownDoc)
from .textmodel import word_tokens

COHORTS = ("reference", "original", "enhanced")
REPORT_VERSION = "1"


class Bm25Index:
    """Term statistics over a reference collection.

    Documents are tokenized with the model tokenizer, keeping word tokens only.
    """

    def __init__(self, docs, k1: float = 1.2, b: float = 0.75, doc_ids=None, categories=None):
        docs = list(docs)
        if not docs:
            raise EmptyReferenceSet("BM25 needs at least one reference document")
        self.k1 = k1
        self.b = b
        self.doc_ids = list(doc_ids) if doc_ids is not None else list(range(len(docs)))
        self.categories = list(categories) if categories is not None else [""] * len(docs)
        self.docs = [word_tokens(d) for d in docs]
        self.tf = [Counter(d) for d in self.docs]
        self.doc_len = [len(d) for d in self.docs]
        self.N = len(docs)
        self.avgdl = sum(self.doc_len) / self.N
        self.df = Counter()
        for counts in self.tf:
            self.df.update(counts.keys())
        self._pos = {d: i for i, d in enumerate(self.doc_ids)}
        self._by_category = defaultdict(list)
        for i, c in enumerate(self.categories):
            self._by_category[c].append(i)

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log((self.N - df + 0.5) / (df + 0.5) + 1.0)

    def score_pos(self, query_terms, i: int) -> float:
        tf = self.tf[i]
        dl = self.doc_len[i]
        # an all-empty collection has avgdl 0; the length ratio is then taken as 1
        ratio = dl / self.avgdl if self.avgdl > 0 else 1.0
        norm = self.k1 * (1.0 - self.b + self.b * ratio)
        s = 0.0
        for t in query_terms:
            f = tf.get(t, 0)
            if f:
                s += self.idf(t) * f * (self.k1 + 1.0) / (f + norm)
        return s

    def score(self, query_text: str, doc_id) -> float:
        if doc_id not in self._pos:
            raise UnknownDoc(f"unknown reference document {doc_id!r}")
        return self.score_pos(query_terms(query_text), self._pos[doc_id])

    def candidates(self, category: str = "", exclude=None):
        pool = self._by_category.get(category) if category else None
        if not pool:
            pool = range(self.N)
        return [i for i in pool if self.doc_ids[i] != exclude]


def query_terms(text: str) -> list:
    """Deduplicated word tokens, first-occurrence order."""
    return list(dict.fromkeys(word_tokens(text)))


def build_index(reference_docs, k1: float = 1.2, b: float = 0.75, doc_ids=None,
                categories=None) -> Bm25Index:
    return Bm25Index(reference_docs, k1, b, doc_ids, categories)


def bm25_score(index: Bm25Index, query_text: str, doc_id) -> float:
    return index.score(query_text, doc_id)


def item_alignment_score(index: Bm25Index, text: str, item, exclude_self: bool = False) -> float:
    """Best BM25 of `text` over the references in the item's category.

    Falls back to every reference when the category is empty or has no
    references. With `exclude_self`, the item's own reference is skipped.
    """
    terms = query_terms(text)
    pool = index.candidates(item.category, item.item_id if exclude_self else None)
    if not pool or not terms:
        return 0.0
    return max(index.score_pos(terms, i) for i in pool)


# ----------------------------------------------------------------------------
# NDCG

@dataclass(frozen=True)
class RatingRecord:
    item_id: str
    rating: int
    rater_id: str
    cohort: str = "enhanced"

    def __post_init__(self):
        if not isinstance(self.rating, int) or not 1 <= self.rating <= 5:
            raise ValueError(f"rating must be an integer in 1..5, got {self.rating!r}")
        if self.cohort not in COHORTS:
            raise ValueError(f"unknown cohort {self.cohort!r}")


def load_ratings(path) -> list:
    out = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open ratings {path}: {exc.strerror}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(RatingRecord(rec["item_id"], rec["rating"], rec["rater_id"],
                                        rec.get("cohort", "enhanced")))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise DataError(f"ratings line {n}: {exc}") from None
    return out


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def grades_from_ratings(ratings) -> dict:
    """Mean rating per item, rounded half-up to an integer grade."""
    by_item = defaultdict(list)
    for r in ratings:
        by_item[r.item_id].append(r.rating)
    return {k: round_half_up(sum(v) / len(v)) for k, v in by_item.items()}


def dcg(grades, k: int) -> float:
    return sum((2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(grades[:k]))


def ndcg_at_k(ranked_item_ids, ratings, k: int = 10) -> float:
    """NDCG@k with exponential gain 2^g - 1 and log2(i + 1) discount."""
    ranked = list(ranked_item_ids)
    if not ranked:
        raise EmptyRanking("cannot compute NDCG of an empty ranking")
    if k < 1:
        raise EvalError("k must be >= 1")
    grades = ratings if isinstance(ratings, dict) else grades_from_ratings(ratings)
    missing = [i for i in ranked if i not in grades]
    if missing:
        raise MissingRating(missing[0])
    got = [grades[i] for i in ranked]
    ideal = dcg(sorted(got, reverse=True), k)
    if ideal == 0.0:
        return 1.0
    return dcg(got, k) / ideal


# ----------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    bm25: dict = field(default_factory=lambda: {c: {} for c in COHORTS})
    ndcg: dict = field(default_factory=dict)
    ndcg_counts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def mean_bm25(self, cohort) -> float:
        vals = list(self.bm25[cohort].values())
        return math.fsum(vals) / len(vals) if vals else float("nan")

    def counts(self) -> dict:
        return {c: len(self.bm25[c]) for c in COHORTS}

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["report"] = {"version": REPORT_VERSION}
        cp["meta"] = {k: str(v) for k, v in sorted(self.meta.items())}
        for c in COHORTS:
            sec = {"count": str(len(self.bm25[c])), "mean_bm25": repr(self.mean_bm25(c))}
            if c in self.ndcg:
                sec["ndcg_at_10"] = repr(self.ndcg[c])
                sec["ndcg_rated"] = str(self.ndcg_counts.get(c, 0))
            cp[f"cohort.{c}"] = sec
            cp[f"bm25.{c}"] = {k: repr(v) for k, v in sorted(self.bm25[c].items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
            if cp["report"]["version"] != REPORT_VERSION:
                raise EvalError(f"unsupported report version {cp['report']['version']}")
            rep = cls(meta=dict(cp["meta"]))
            for c in COHORTS:
                rep.bm25[c] = {k: float(v) for k, v in cp[f"bm25.{c}"].items()}
                sec = cp[f"cohort.{c}"]
                if "ndcg_at_10" in sec:
                    rep.ndcg[c] = float(sec["ndcg_at_10"])
                    rep.ndcg_counts[c] = int(sec["ndcg_rated"])
        except (configparser.Error, KeyError, ValueError) as exc:
            raise EvalError(f"unreadable report: {exc}") from None
        return rep

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise EvalError(f"cannot read report {path}: {exc}") from None
        return cls.loads(text)

    def per_item_csv(self) -> str:
        buf = io.StringIO()
        if "config_hash" in self.meta:
            buf.write(f"# config_hash={self.meta['config_hash']}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cohort", "item_id", "bm25"])
        for c in COHORTS:
            for item_id, v in sorted(self.bm25[c].items()):
                w.writerow([c, item_id, repr(v)])
        return buf.getvalue()


def build_report(split, enhanced, index: Bm25Index, ratings=(), display_scores=None,
                 ndcg_k: int = 10, meta=None) -> EvalReport:
    """Cohort BM25 means and, where ratings exist, NDCG@k per cohort.

    reference = top-half items scored against the other references;
    original = bottom-half descriptions as they were; enhanced = the
    assembled outputs for the bottom half. `display_scores` maps
    (cohort, item_id) to the score items are ranked by for NDCG.
    """
    test_ids = {it.item_id for it in split.test}
    by_id = {e.item_id: e for e in enhanced}
    if set(by_id) != test_ids:
        raise InconsistentIds("enhanced outputs do not match the test split item ids")
    rep = EvalReport(meta=dict(meta or {}))
    rep.meta.update(k1=repr(index.k1), b=repr(index.b), ndcg_k=str(ndcg_k),
                    query="enhanced text", documents="top-half descriptions",
                    alignment="max over in-category references")
    for it in split.train:
        rep.bm25["reference"][it.item_id] = item_alignment_score(index, it.description, it,
                                                                 exclude_self=True)
    for it in split.test:
        rep.bm25["original"][it.item_id] = item_alignment_score(index, it.description, it)
        rep.bm25["enhanced"][it.item_id] = item_alignment_score(index, by_id[it.item_id].assembled,
                                                                it)
    ratings = list(ratings)
    if ratings:
        members = {"reference": {it.item_id for it in split.train}, "original": test_ids,
                   "enhanced": test_ids}
        for c in COHORTS:
            rs = [r for r in ratings if r.cohort == c]
            if not rs:
                continue
            stray = {r.item_id for r in rs} - members[c]
            if stray:
                raise InconsistentIds(f"ratings for items outside the {c} cohort: "
                                      f"{sorted(stray)[:3]}")
            grades = grades_from_ratings(rs)
            scores = display_scores or {}
            ranked = sorted(grades, key=lambda i: (-scores.get((c, i), float("-inf")), i))
            rep.ndcg[c] = ndcg_at_k(ranked, grades, ndcg_k)
            rep.ndcg_counts[c] = len(ranked)
    return rep
