import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspectgen import textmodel as tm
from aspectgen.errors import EmptyCorpus, SequenceTooLong

from conftest import random_lm_params, random_sequence, small_lm_config


def reference_forward(params, ids):
    """Position-by-position, head-by-head forward pass written with plain loops."""
    p = params.arrays
    d, h = params.d_e, params.heads
    dh = d // h
    T = len(ids)

    def ln(x, g, b):
        mu = sum(x) / d
        var = sum((xi - mu) ** 2 for xi in x) / d
        return np.array([(xi - mu) / math.sqrt(var + 1e-5) * gi + bi
                         for xi, gi, bi in zip(x, g, b)])

    def gelu(z):
        return 0.5 * z * (1 + math.tanh(math.sqrt(2 / math.pi) * (z + 0.044715 * z ** 3)))

    x = [p["tok_emb"][ids[t]] + p["pos_emb"][t] for t in range(T)]
    rows = []
    for t in range(T):
        heads = []
        for j in range(h):
            sl = slice(j * dh, (j + 1) * dh)
            q = (x[t] @ p["w_q"])[sl]
            scores = [float(q @ (x[s] @ p["w_k"])[sl]) / math.sqrt(dh) for s in range(t + 1)]
            m = max(scores)
            w = [math.exp(sc - m) for sc in scores]
            z = sum(w)
            heads.append(sum((wi / z) * (x[s] @ p["w_v"])[sl] for s, wi in enumerate(w)))
        a = np.concatenate(heads) @ p["w_o"]
        h1 = ln(x[t] + a, p["ln1_g"], p["ln1_b"])
        f = np.array([gelu(u) for u in h1 @ p["w_ff1"]]) @ p["w_ff2"]
        h2 = ln(h1 + f, p["ln2_g"], p["ln2_b"])
        logits = h2 @ p["w_out"]
        e = np.exp(logits - logits.max())
        rows.append(e / e.sum())
    return np.array(rows)


# ---------------------------------------------------------------- tokenizer / vocabulary

def test_tokenize_and_word_tokens():
    assert tm.tokenize("Cotton, 98%!") == ["cotton", ",", "98", "%", "!"]
    assert tm.word_tokens("Cotton, 98%!") == ["cotton", "98"]


def test_detokenize_reattaches_punctuation():
    text = "material: 61% cotton/24% polyester. weight: 6.8 lbs, 5-year warranty!"
    assert tm.detokenize(tm.tokenize(text)) == text


def test_build_vocab_counts():
    v = tm.build_vocab(["a a b"], small_lm_config(), min_frequency=1)
    assert len(v) == 4 + 2
    assert "a" in v and "b" in v
    assert v.id_to_token[:4] == list(tm.RESERVED)
    assert v.id("a") < v.id("b")  # more frequent first


def test_min_frequency_maps_rare_tokens_to_unk():
    v = tm.build_vocab(["a a b"], small_lm_config(), min_frequency=2)
    assert v.encode("b") == [tm.UNK]
    assert v.encode("a") != [tm.UNK]


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        tm.build_vocab([], small_lm_config())


def test_vocab_cap_and_specials():
    v = tm.build_vocab(["a b c d e f"], small_lm_config(vocab_cap=7), specials=("<x>",))
    assert len(v) == 7
    assert v.id("<x>") == 4


def test_vocab_round_trip(tmp_path):
    v = tm.build_vocab(["red shirt, blue shirt"], small_lm_config(), specials=("<sep>",))
    v.save(tmp_path / "v.txt")
    assert tm.Vocabulary.load(tmp_path / "v.txt") == v


def test_token_sequence_invariants():
    with pytest.raises(ValueError):
        tm.TokenSequence((tm.BOS, 5))
    with pytest.raises(ValueError):
        tm.TokenSequence((tm.BOS, tm.PAD, tm.EOS))
    s = tm.TokenSequence.from_ids(range(4, 40), context_len=10)
    assert len(s) == 10 and s.ids[0] == tm.BOS and s.ids[-1] == tm.EOS


# ---------------------------------------------------------------- forward

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_forward_matches_loop_reference(seed):
    params = random_lm_params(vocab_size=11, seed=seed)
    seq = random_sequence(np.random.default_rng(seed), 11, 9)
    np.testing.assert_allclose(tm.forward(params, seq), reference_forward(params, seq.ids),
                               rtol=1e-10, atol=1e-12)


def test_zero_params_give_uniform_rows():
    V = 9
    params = tm.LmParams.zeros(V, small_lm_config())
    probs = tm.forward(params, tm.TokenSequence((tm.BOS, 5, 6, tm.EOS)))
    np.testing.assert_allclose(probs, np.full((4, V), 1.0 / V), rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 16))
def test_rows_are_distributions(seed, length):
    params = random_lm_params(vocab_size=10, seed=seed % 7)
    seq = random_sequence(np.random.default_rng(seed), 10, length)
    probs = tm.forward(params, seq)
    assert probs.shape == (length, 10)
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


@pytest.mark.parametrize("j", [1, 3, 5])
def test_causality_under_embedding_perturbation(j):
    params = random_lm_params(vocab_size=12, seed=4)
    seq = tm.TokenSequence((tm.BOS, 4, 5, 6, 7, 8, 9, tm.EOS))  # every id occurs once
    before = tm.forward(params, seq)
    params.arrays["tok_emb"][seq.ids[j]] += 0.5
    after = tm.forward(params, seq)
    # row t predicts token t+1 from positions <= t, so rows before j cannot move
    np.testing.assert_array_equal(after[:j], before[:j])
    assert np.all(np.abs(after[j:] - before[j:]).max(axis=1) > 0)


def test_future_tokens_do_not_leak():
    params = random_lm_params(vocab_size=12, seed=5)
    a = tm.TokenSequence((tm.BOS, 5, 6, 7, 8, tm.EOS))
    b = tm.TokenSequence((tm.BOS, 5, 6, 11, 10, 9, tm.EOS))
    np.testing.assert_array_equal(tm.forward(params, a)[:3], tm.forward(params, b)[:3])


def test_context_limit():
    params = random_lm_params(vocab_size=10, seed=0)
    with pytest.raises(SequenceTooLong):
        tm.forward(params, tm.TokenSequence.from_ids([5] * params.context_len))


# ---------------------------------------------------------------- loss and gradient

def test_zero_params_loss_is_k_ln_v():
    V = 13
    params = tm.LmParams.zeros(V, small_lm_config())
    loss1, _ = tm.nll_loss(params, tm.TokenSequence((tm.BOS, tm.EOS)))
    assert loss1 == pytest.approx(math.log(V), rel=1e-14)
    loss5, _ = tm.nll_loss(params, tm.TokenSequence((tm.BOS, 4, 5, 6, 7, tm.EOS)))
    assert loss5 == pytest.approx(5 * math.log(V), rel=1e-14)


def test_loss_matches_reference_probabilities():
    params = random_lm_params(vocab_size=10, seed=8)
    seq = random_sequence(np.random.default_rng(8), 10, 7)
    probs = reference_forward(params, seq.ids)
    expected = -sum(math.log(probs[t, seq.ids[t + 1]]) for t in range(len(seq) - 1))
    loss, _ = tm.nll_loss(params, seq)
    assert loss == pytest.approx(expected, rel=1e-11)


def test_batch_loss_is_sum_of_single_losses():
    params = random_lm_params(vocab_size=10, seed=9)
    rng = np.random.default_rng(9)
    seqs = [random_sequence(rng, 10, n) for n in (3, 7, 5)]
    total, grad, n_tok = tm.nll_loss_batch(params, seqs)
    singles = [tm.nll_loss(params, s) for s in seqs]
    assert n_tok == sum(len(s) - 1 for s in seqs)
    assert total == pytest.approx(sum(l for l, _ in singles), rel=1e-12)
    for name in tm.PARAM_NAMES:
        np.testing.assert_allclose(grad[name], sum(g[name] for _, g in singles),
                                   rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_central_differences(seed):
    params = random_lm_params(vocab_size=12, seed=seed)
    rng = np.random.default_rng(100 + seed)
    seq = random_sequence(rng, 12, int(rng.integers(4, 10)))
    _, grad = tm.nll_loss(params, seq)
    step = 1e-5
    worst = 0.0
    for name in tm.PARAM_NAMES:
        arr = params.arrays[name]
        for flat in rng.choice(arr.size, size=min(6, arr.size), replace=False):
            idx = np.unravel_index(flat, arr.shape)
            old = arr[idx]
            arr[idx] = old + step
            up, _ = tm.nll_loss(params, seq)
            arr[idx] = old - step
            down, _ = tm.nll_loss(params, seq)
            arr[idx] = old
            num = (up - down) / (2 * step)
            a = grad[name][idx]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    assert worst <= 1e-4


def test_single_sequence_overfits_in_200_steps():
    rng = np.random.default_rng(0)
    seq = tm.TokenSequence((tm.BOS, *rng.integers(4, 40, size=8).tolist(), tm.EOS))
    params = tm.LmParams.init(40, tm.LmConfig(d_e=32, heads=2, context_len=16, seed=0))
    for _ in range(200):
        _, grad = tm.nll_loss(params, seq)
        scale = min(1.0, 5.0 / grad.norm())
        for k in tm.PARAM_NAMES:
            params.arrays[k] -= 0.2 * scale * grad[k]
    loss, _ = tm.nll_loss(params, seq)
    assert loss / (len(seq) - 1) < 0.1


def test_sequence_logprob_agrees_with_loss():
    params = random_lm_params(vocab_size=10, seed=3)
    seq = random_sequence(np.random.default_rng(3), 10, 8)
    loss, _ = tm.nll_loss(params, seq)
    assert tm.sequence_logprob(params, seq.ids, 1) == pytest.approx(-loss, rel=1e-12)


def test_checkpoint_round_trip_is_exact(tmp_path):
    params = random_lm_params(vocab_size=10, seed=1)
    params.save(tmp_path / "lm.bin")
    again = tm.LmParams.load(tmp_path / "lm.bin")
    assert again == params
    again.save(tmp_path / "lm2.bin")
    assert (tmp_path / "lm.bin").read_bytes() == (tmp_path / "lm2.bin").read_bytes()


# ---------------------------------------------------------------- sampling

def test_top_k_one_is_greedy_for_every_seed():
    params = random_lm_params(vocab_size=12, seed=2)
    prefix = (tm.BOS, 5)
    outs = {tm.sample(params, prefix, top_k=1, seed=s).ids for s in range(5)}
    assert len(outs) == 1
    ids = list(prefix)
    for _ in range(params.context_len - len(prefix)):
        nxt = int(np.argmax(tm.forward(params, ids + [tm.EOS])[len(ids) - 1]))
        ids.append(nxt)
        if nxt == tm.EOS:
            break
    if ids[-1] != tm.EOS:
        ids = ids[: params.context_len - 1] + [tm.EOS]
    assert outs.pop() == tuple(ids)


def test_same_seed_same_sample():
    params = random_lm_params(vocab_size=12, seed=2)
    a = tm.sample(params, (tm.BOS,), temperature=1.3, top_k=5, seed=11)
    b = tm.sample(params, (tm.BOS,), temperature=1.3, top_k=5, seed=11)
    assert a == b


def test_uniform_model_samples_uniformly():
    V, n = 12, 10_000
    params = tm.LmParams.zeros(V, small_lm_config())
    gens = tm.sample_batch(params, (tm.BOS,), n, temperature=1.0, top_k=V, seed=123,
                           max_new_tokens=1)
    counts = np.bincount([g[0] for g in gens], minlength=V)
    assert counts[tm.PAD] == 0
    p = 1.0 / (V - 1)
    sd = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts[1:] - n * p) <= 3 * sd)


def test_top_k_restricts_support_and_bans_apply():
    params = random_lm_params(vocab_size=12, seed=6)
    last = tm.forward(params, (tm.BOS, 5, tm.EOS))[1]
    last[tm.PAD] = -1.0  # never sampled
    top3 = set(np.argsort(-last, kind="stable")[:3].tolist())
    gens = tm.sample_batch(params, (tm.BOS, 5), 300, top_k=3, seed=0, max_new_tokens=1)
    assert {g[0] for g in gens} <= top3
    banned = sorted(top3)[:1]
    gens = tm.sample_batch(params, (tm.BOS, 5), 300, top_k=3, seed=0, max_new_tokens=1,
                           banned_ids=banned)
    assert banned[0] not in {g[0] for g in gens}


def test_sample_logprobs_are_under_the_plain_model():
    params = random_lm_params(vocab_size=12, seed=7)
    prefix = [tm.BOS, 5]
    gens, lps = tm.sample_batch(params, prefix, 4, temperature=0.7, top_k=4, seed=3,
                                return_logprobs=True)
    for gen, lp in zip(gens, lps):
        ids = prefix + gen
        assert lp == pytest.approx(tm.sequence_logprob(params, ids, len(prefix)), rel=1e-10)
