import os
import time

import numpy as np
import pytest

from aspectgen import pipeline as pl
from aspectgen import textmodel as tm
from aspectgen.corpus import Item
from aspectgen.ctr import CtrExample, CtrModel
from aspectgen.trainer import CompositeParams, TrainingSample

ASSETS = os.path.join(os.path.dirname(__file__), "assets")

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])


def small_lm_config(**kw):
    base = dict(d_e=8, heads=2, context_len=16, vocab_cap=64, seed=0, init_std=0.3)
    base.update(kw)
    return tm.LmConfig(**base)


def random_lm_params(vocab_size=12, seed=0, **kw):
    """Small random LM with non-trivial layer-norm gains and biases."""
    p = tm.LmParams.init(vocab_size, small_lm_config(seed=seed, **kw))
    rng = np.random.default_rng(seed + 1000)
    for name in ("ln1_g", "ln2_g"):
        p.arrays[name] += rng.normal(0.0, 0.2, size=p.arrays[name].shape)
    for name in ("ln1_b", "ln2_b"):
        p.arrays[name] += rng.normal(0.0, 0.2, size=p.arrays[name].shape)
    return p


def random_sequence(rng, vocab_size, length):
    body = rng.integers(tm.RESERVED.__len__(), vocab_size, size=length - 2)
    return tm.TokenSequence((tm.BOS, *body.tolist(), tm.EOS))


def random_ctr_model(rng, n_features=10):
    return CtrModel(rng.normal(0.0, 0.5, n_features), float(rng.normal()),
                    rng.normal(0.0, 1.0, n_features), rng.uniform(0.5, 2.0, n_features))


def random_composite_instance(seed, vocab_size=12, n_samples=3):
    rng = np.random.default_rng(seed)
    params = CompositeParams(random_lm_params(vocab_size, seed), random_ctr_model(rng))
    batch = []
    for i in range(n_samples):
        seqs = tuple((None, random_sequence(rng, vocab_size, int(rng.integers(3, 9))))
                     for _ in range(int(rng.integers(0, 3))))
        ex = CtrExample(rng.normal(0.0, 2.0, 10), float(rng.uniform()))
        batch.append(TrainingSample(f"s{i}", seqs, ex))
    return params, batch


def make_item(item_id, ctr=0.1, description="", title="Thing", category=""):
    return Item(item_id, title, description, int(round(ctr * 1000)), 1000, category)


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    """Two independent default pipeline runs on the bundled corpus.

    Returns [(out_dir, report, seconds), ...].
    """
    out = []
    for name in ("run_a", "run_b"):
        d = str(tmp_path_factory.mktemp(name))
        t0 = time.perf_counter()
        report = pl.cmd_pipeline(pl.RunConfig(out=d))
        out.append((d, report, time.perf_counter() - t0))
    return out


@pytest.fixture(scope="session")
def tradeoff_run(tmp_path_factory):
    """Pipeline plus rerank ablation on the planted trade-off corpus."""
    d = str(tmp_path_factory.mktemp("tradeoff"))
    cfg = pl.RunConfig.from_file(os.path.join(ASSETS, "tradeoff.cfg"))
    cfg = cfg.with_overrides({"dataset": os.path.join(ASSETS, "tradeoff_corpus.jsonl"),
                              "out": d})
    pl.cmd_pipeline(cfg)
    rows = pl.cmd_ablate(cfg, "rerank")
    return cfg, rows


# five short lowercase documents; whitespace splitting matches the word tokenizer here
TOY_DOCS = ["red cotton shirt with red buttons",
            "blue denim jacket",
            "soft cotton sweater in red",
            "oak dining table with oak legs and a smooth oak top",
            "cotton"]


def brute_bm25(docs, query, j, k1=1.2, b=0.75):
    """Direct transcription of Okapi BM25, recounting everything per call."""
    toks = [d.split() for d in docs]
    n = len(toks)
    avgdl = sum(len(t) for t in toks) / n
    total = 0.0
    for term in dict.fromkeys(query.split()):
        df = sum(term in t for t in toks)
        idf = np.log((n - df + 0.5) / (df + 0.5) + 1.0)
        tf = toks[j].count(term)
        total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(toks[j]) / avgdl))
    return total
