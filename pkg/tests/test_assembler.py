import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspectgen import textmodel as tm
from aspectgen.assembler import (Candidate, DecodeConfig, EnhancedDescription, assemble,
                                 banned_ids, choose, derive_seed, enhance_item, generate_aspect,
                                 read_enhanced, rerank, write_enhanced)
from aspectgen.ctr import CtrModel
from aspectgen.errors import ConfigError, MissingAspect
from aspectgen.segmenter import ASPECTS, Aspect
from aspectgen.trainer import CONTROL_TOKENS, CompositeParams

from conftest import make_item

CORPUS = ["Material: 100% cotton. Only at ShopMart. So cozy and chic.",
          "Weighs 2 lbs. A unique hand-carved handle. Backed by a 1-year warranty.",
          "Red Shirt", "Oak Table"]


@pytest.fixture(scope="module")
def model():
    vocab = tm.build_vocab(CORPUS, tm.LmConfig(), specials=CONTROL_TOKENS)
    lm = tm.LmParams.init(len(vocab), tm.LmConfig(d_e=16, heads=2, context_len=24, seed=1,
                                                   init_std=0.5))
    ctr = CtrModel(np.linspace(-0.5, 0.5, 10), -1.0, np.zeros(10), np.ones(10))
    return CompositeParams(lm, ctr), vocab


def cand(aspect, text, ll=-1.0, lc=-1.0, index=0, lam=0.5):
    return Candidate(aspect, (), text, ll, lc, lam, index)


def test_assemble_joins_in_canonical_order():
    choices = [cand(a, t) for a, t in zip(reversed(ASPECTS), "edcba")]
    out = assemble(choices, make_item("x"), lam=0.5)
    assert out.assembled == "a b c d e"
    assert out.texts == ("a", "b", "c", "d", "e")
    assert assemble(choices, make_item("x"), lam=0.5) == out


def test_assemble_keeps_guarantee_phrase_in_its_slot():
    texts = ["Elevate your everyday look.", "Material: 77% rayon.", "Inseam: 28 inches.",
             "A unique high-rise cut.", "Find it exclusive at ShopMart."]
    out = assemble([cand(a, t) for a, t in zip(ASPECTS, texts)], make_item("x"), lam=0.5)
    assert "exclusive at ShopMart" in out.texts[ASPECTS.index(Aspect.BrandGuarantees)]
    assert out.assembled == " ".join(texts)


def test_assemble_skips_empty_slots_and_records_reason():
    texts = ["a", "", "c", " ", "e"]
    out = assemble([cand(a, t) for a, t in zip(ASPECTS, texts)], make_item("x"), lam=0.5)
    assert out.assembled == "a c e"
    assert out.empty_reasons == ("", "empty generation", "", "empty generation", "")


def test_assemble_requires_every_aspect():
    with pytest.raises(MissingAspect):
        assemble([cand(a, "t") for a in ASPECTS[:4]], make_item("x"), lam=0.5)


def test_rerank_endpoints_follow_single_components():
    a = cand(Aspect.LanguageAppeal, "likely", -0.2, -3.0, 0)
    b = cand(Aspect.LanguageAppeal, "clicky", -1.5, -0.4, 1)
    assert rerank([a, b], 1.0)[0].text == "likely"
    assert rerank([a, b], 0.0)[0].text == "clicky"


def test_rerank_ties_keep_generation_order():
    a = cand(Aspect.LanguageAppeal, "first", -1.0, -1.0, 0)
    b = cand(Aspect.LanguageAppeal, "second", -1.0, -1.0, 1)
    assert [c.text for c in rerank([b, a], 0.3)] == ["first", "second"]


scores = st.floats(-20, 0, allow_nan=False)
# well separated values, so a shift cannot collapse two of them by rounding
grid = st.integers(-2000, 0).map(lambda v: v / 100)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(grid, grid), min_size=2, max_size=8, unique_by=(lambda p: p[0],
                                                                          lambda p: p[1])),
       st.floats(0.01, 100))
def test_argmax_invariance_under_scaling(pairs, c):
    cands = [cand(Aspect.LanguageAppeal, str(i), ll, lc, i) for i, (ll, lc) in enumerate(pairs)]
    scaled_ll = [cand(Aspect.LanguageAppeal, str(i), c * ll, lc, i)
                 for i, (ll, lc) in enumerate(pairs)]
    best_ll = max(range(len(pairs)), key=lambda i: (pairs[i][0], -i))
    assert rerank(cands, 1.0)[0].index == best_ll
    assert rerank(scaled_ll, 1.0)[0].index == best_ll
    # multiplying every predicted CTR by c adds ln c to every log CTR
    shifted = [cand(Aspect.LanguageAppeal, str(i), ll, lc + math.log(c), i)
               for i, (ll, lc) in enumerate(pairs)]
    assert rerank(shifted, 0.0)[0].index == rerank(cands, 0.0)[0].index


@settings(max_examples=200, deadline=None)
@given(scores, scores, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_dominating_candidate_wins_for_every_lambda(ll, lc, d1, d2, lam):
    a = cand(Aspect.LanguageAppeal, "a", ll + d1 + 1e-6, lc + d2 + 1e-6, lam=lam)
    b = cand(Aspect.LanguageAppeal, "b", ll, lc, lam=lam)
    assert a.composite_score > b.composite_score


def test_derive_seed_is_stable_and_distinct():
    s = derive_seed(0, "item-1", Aspect.LanguageAppeal)
    assert s == derive_seed(0, "item-1", Aspect.LanguageAppeal)
    others = {derive_seed(0, "item-1", a) for a in ASPECTS} | {derive_seed(1, "item-1",
                                                                          Aspect.LanguageAppeal)}
    assert len(others) == 6


def test_generate_aspect_greedy_single_candidate(model):
    params, vocab = model
    item = make_item("g", title="Red Shirt")
    dc = DecodeConfig(n_candidates=1, top_k=1)
    outs = {generate_aspect(params, vocab, item, Aspect.FactualInformation, dc, 0.5, s)[0].ids
            for s in range(4)}
    assert len(outs) == 1


def test_generate_aspect_scores(model):
    params, vocab = model
    item = make_item("g", title="Oak Table")
    cands = generate_aspect(params, vocab, item, Aspect.UniqueAttributes,
                            DecodeConfig(n_candidates=6), 0.429, seed=5)
    assert len(cands) == 6
    assert [c.composite_score for c in cands] == sorted((c.composite_score for c in cands),
                                                        reverse=True)
    forbidden = set(banned_ids(vocab))
    for c in cands:
        assert not forbidden & set(c.ids)
        assert c.norm_loglik <= 0 and c.log_ctr < 0
        assert c.predicted_ctr == pytest.approx(math.exp(c.log_ctr))
    by_ll = rerank(cands, 1.0)
    assert [c.norm_loglik for c in by_ll] == sorted((c.norm_loglik for c in cands), reverse=True)
    by_ctr = rerank(cands, 0.0)
    assert [c.log_ctr for c in by_ctr] == sorted((c.log_ctr for c in cands), reverse=True)


def test_enhance_empty_item_fills_five_slots(model):
    params, vocab = model
    item = make_item("e", description="", title="Red Shirt")
    out = enhance_item(params, vocab, item, 0.429, DecodeConfig(n_candidates=3), seed=2)
    assert len(out.texts) == 5 and len(out.scores) == 5
    assert out == enhance_item(params, vocab, item, 0.429, DecodeConfig(n_candidates=3), seed=2)


def test_choose_differs_between_endpoints_on_opposing_fixture():
    by_aspect = {a: [cand(a, f"{a.name}-likely", -0.1, -4.0, 0),
                     cand(a, f"{a.name}-clicky", -3.0, -0.1, 1)] for a in ASPECTS}
    at0 = [c.text for c in choose(by_aspect, 0.0)]
    at1 = [c.text for c in choose(by_aspect, 1.0)]
    assert all(t.endswith("clicky") for t in at0)
    assert all(t.endswith("likely") for t in at1)


def test_provenance_regenerates_output(model, tmp_path):
    params, vocab = model
    items = [make_item(f"i{k}", title=t) for k, t in enumerate(["Red Shirt", "Oak Table"])]
    dc = DecodeConfig(n_candidates=2)
    outs = [enhance_item(params, vocab, it, 0.3, dc, seed=7, manifest_hash="abc") for it in items]
    path = tmp_path / "enhanced.jsonl"
    write_enhanced(path, outs, config_hash="cfg")
    back = read_enhanced(path)
    assert back == outs
    for rec, it in zip(back, items):
        again = enhance_item(params, vocab, it, rec.lam, dc, rec.seed, rec.manifest_hash)
        assert again == rec
    assert all('"config_hash": "cfg"' in ln for ln in path.read_text().splitlines())


def test_decode_config_validation():
    with pytest.raises(ConfigError):
        DecodeConfig(n_candidates=0)
    with pytest.raises(ConfigError):
        DecodeConfig(temperature=0.0)


def test_display_score_is_mean_of_chosen_scores():
    out = EnhancedDescription("x", ("a",) * 5, "a a a a a", 0.5, 0, "", (-1.0, -2.0, -3.0, -4.0,
                                                                          -5.0))
    assert out.display_score == -3.0
