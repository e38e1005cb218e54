"""Tokenizer, vocabulary and a one-block causal self-attention language model.

Everything is plain numpy in float64 with hand-written backpropagation, so
that gradients can be checked exactly against finite differences.

Model layout (post-norm)::

    x  = tok_emb[ids] + pos_emb[:T]
    h1 = LN1(x + Attn(x))
    h2 = LN2(h1 + FFN(h1))          FFN(h) = gelu(h @ w_ff1) @ w_ff2
    logits = h2 @ w_out
"""

from __future__ import annotations

import re
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyCorpus, SequenceTooLong

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_NO_SPACE_BEFORE = set(".,;:!?%)]}”’'\"")
_NO_SPACE_AFTER = set("([{“‘$")
_JOINERS = {"-", "/"}

LN_EPS = 1e-5
_GELU_C = np.sqrt(2.0 / np.pi)

CHECKPOINT_MAGIC = b"ASPLM"
CHECKPOINT_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase, then split into word runs and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


def word_tokens(text: str) -> list[str]:
    """Tokens of `text` that contain at least one alphanumeric character."""
    return [t for t in tokenize(text) if t[0].isalnum() or t[0] == "_"]


def detokenize(tokens) -> str:
    """Join tokens with spaces, re-attaching punctuation, hyphens, slashes
    and decimal points."""
    tokens = list(tokens)
    out = []
    for i, tok in enumerate(tokens):
        prev = tokens[i - 1] if i else ""
        tight = (
            not out
            or tok in _NO_SPACE_BEFORE
            or prev[-1] in _NO_SPACE_AFTER
            or tok in _JOINERS or prev in _JOINERS
            or (prev == "." and tok.isdigit() and i >= 2 and tokens[i - 2].isdigit())
        )
        if not tight:
            out.append(" ")
        out.append(tok)
    return "".join(out)


@dataclass(frozen=True)
class LmConfig:
    d_e: int = 64
    heads: int = 2
    context_len: int = 128
    vocab_cap: int = 8192
    seed: int = 0
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_e % self.heads:
            raise ValueError("d_e must be divisible by heads")
        if self.context_len < 2:
            raise ValueError("context_len must be at least 2")


class Vocabulary:
    """Token <-> id map. Ids 0..3 are PAD, BOS, EOS, UNK; extra specials follow."""

    def __init__(self, tokens, min_frequency: int = 1):
        self.id_to_token = list(tokens)
        if tuple(self.id_to_token[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate token in vocabulary")
        self.min_frequency = min_frequency

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def encode(self, text: str) -> list[int]:
        return [self.id(t) for t in tokenize(text)]

    def decode(self, ids, skip_special: bool = True) -> str:
        toks = []
        for i in ids:
            tok = self.id_to_token[i]
            if skip_special and tok.startswith("<") and tok.endswith(">") and len(tok) > 2:
                continue
            toks.append(tok)
        return detokenize(toks)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# min_frequency={self.min_frequency}\n")
            for tok in self.id_to_token:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        min_freq = 1
        if lines and lines[0].startswith("# min_frequency="):
            min_freq = int(lines[0].split("=", 1)[1])
            lines = lines[1:]
        if lines and lines[-1] == "":
            lines = lines[:-1]
        return cls(lines, min_frequency=min_freq)


def build_vocab(corpus, config: LmConfig = LmConfig(), min_frequency: int = 1,
                specials=()) -> Vocabulary:
    """Count tokens over `corpus` and keep those seen at least `min_frequency` times.

    Ordering is (frequency desc, token asc), truncated at `config.vocab_cap`
    entries including the reserved and extra special tokens.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    head = list(RESERVED) + [s for s in specials if s not in RESERVED]
    for s in head:
        counts.pop(s, None)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency),
                  key=lambda t: (-counts[t], t))
    room = max(config.vocab_cap - len(head), 0)
    return Vocabulary(head + kept[:room], min_frequency=min_frequency)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        if len(ids) < 2 or ids[0] != BOS or ids[-1] != EOS:
            raise ValueError("a token sequence starts with BOS, ends with EOS, length >= 2")
        if PAD in ids:
            raise ValueError("PAD inside a token sequence")

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_ids(cls, body, context_len=None):
        """Wrap `body` with BOS/EOS, truncating the body to fit `context_len`."""
        body = list(body)
        if context_len is not None:
            body = body[: context_len - 2]
        return cls((BOS, *body, EOS))


# ----------------------------------------------------------------------------
# parameters

PARAM_NAMES = (
    "tok_emb", "pos_emb",
    "w_q", "w_k", "w_v", "w_o",
    "ln1_g", "ln1_b",
    "w_ff1", "w_ff2",
    "ln2_g", "ln2_b",
    "w_out",
)


class LmParams:
    """Named float64 arrays of the language model plus the head count.

    Also used as the container for gradients of the same shape.
    """

    def __init__(self, arrays: dict, heads: int):
        missing = set(PARAM_NAMES) - set(arrays)
        if missing:
            raise ValueError(f"missing parameter arrays: {sorted(missing)}")
        self.arrays = {k: np.asarray(arrays[k], dtype=np.float64) for k in PARAM_NAMES}
        self.heads = int(heads)
        v, d = self.arrays["tok_emb"].shape
        if d % self.heads:
            raise ValueError("embedding width not divisible by heads")
        expect = {
            "w_q": (d, d), "w_k": (d, d), "w_v": (d, d), "w_o": (d, d),
            "ln1_g": (d,), "ln1_b": (d,), "ln2_g": (d,), "ln2_b": (d,),
            "w_ff1": (d, 4 * d), "w_ff2": (4 * d, d), "w_out": (d, v),
        }
        for k, shape in expect.items():
            if self.arrays[k].shape != shape:
                raise ValueError(f"{k} has shape {self.arrays[k].shape}, expected {shape}")
        if self.arrays["pos_emb"].ndim != 2 or self.arrays["pos_emb"].shape[1] != d:
            raise ValueError("pos_emb must be (context_len, d_e)")

    def __getitem__(self, name):
        return self.arrays[name]

    @property
    def vocab_size(self):
        return self.arrays["tok_emb"].shape[0]

    @property
    def d_e(self):
        return self.arrays["tok_emb"].shape[1]

    @property
    def context_len(self):
        return self.arrays["pos_emb"].shape[0]

    def copy(self):
        return LmParams({k: a.copy() for k, a in self.arrays.items()}, self.heads)

    def zeros_like(self):
        return LmParams({k: np.zeros_like(a) for k, a in self.arrays.items()}, self.heads)

    def scaled(self, s):
        return LmParams({k: a * s for k, a in self.arrays.items()}, self.heads)

    def norm(self):
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays.values())))

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays.values())

    def __eq__(self, other):
        return (isinstance(other, LmParams) and self.heads == other.heads
                and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in PARAM_NAMES))

    @classmethod
    def init(cls, vocab_size: int, config: LmConfig):
        """Gaussian(0, init_std) weights, unit norm gains, zero norm biases."""
        rng = np.random.default_rng(config.seed)
        d = config.d_e
        shapes = {
            "tok_emb": (vocab_size, d), "pos_emb": (config.context_len, d),
            "w_q": (d, d), "w_k": (d, d), "w_v": (d, d), "w_o": (d, d),
            "w_ff1": (d, 4 * d), "w_ff2": (4 * d, d), "w_out": (d, vocab_size),
        }
        arrays = {k: rng.normal(0.0, config.init_std, size=s) for k, s in shapes.items()}
        arrays["ln1_g"] = np.ones(d)
        arrays["ln2_g"] = np.ones(d)
        arrays["ln1_b"] = np.zeros(d)
        arrays["ln2_b"] = np.zeros(d)
        return cls(arrays, config.heads)

    @classmethod
    def zeros(cls, vocab_size: int, config: LmConfig):
        p = cls.init(vocab_size, config)
        return p.zeros_like()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC + struct.pack("<HI", CHECKPOINT_VERSION, self.heads))
            fh.write(struct.pack("<I", len(PARAM_NAMES)))
            for name in PARAM_NAMES:
                a = np.ascontiguousarray(self.arrays[name], dtype="<f8")
                raw = name.encode("ascii")
                fh.write(struct.pack("<H", len(raw)) + raw)
                fh.write(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
                fh.write(a.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(CHECKPOINT_MAGIC):
            raise DataError(f"{path}: not a model checkpoint")
        pos = len(CHECKPOINT_MAGIC)
        version, heads = struct.unpack_from("<HI", data, pos)
        pos += 6
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        arrays = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("ascii")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            size = int(np.prod(shape)) if shape else 1
            flat = np.frombuffer(data, dtype="<f8", count=size, offset=pos)
            arrays[name] = flat.reshape(shape).copy()
            pos += 8 * size
        return cls(arrays, heads)


# ----------------------------------------------------------------------------
# forward / backward

def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_back(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, dy.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x * x)))
    return 0.5 * x * (1.0 + t), t


def _gelu_back(dy, x, t):
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def _softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _forward(params: LmParams, ids: np.ndarray, keep_cache: bool):
    """Logits for a (B, T) id array. Returns (logits, cache)."""
    p = params.arrays
    B, T = ids.shape
    if T > params.context_len:
        raise SequenceTooLong(f"sequence length {T} exceeds context length {params.context_len}")
    d = params.d_e
    h = params.heads
    dh = d // h
    scale = 1.0 / np.sqrt(dh)

    x = p["tok_emb"][ids] + p["pos_emb"][:T]
    q = (x @ p["w_q"]).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
    k = (x @ p["w_k"]).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
    v = (x @ p["w_v"]).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    causal = np.triu(np.ones((T, T), dtype=bool), k=1)
    scores = np.where(causal, -np.inf, scores)
    att = _softmax(scores)
    o = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
    a_out = o @ p["w_o"]
    h1, ln1_cache = _layer_norm(x + a_out, p["ln1_g"], p["ln1_b"])
    u = h1 @ p["w_ff1"]
    gu, t = _gelu(u)
    f = gu @ p["w_ff2"]
    h2, ln2_cache = _layer_norm(h1 + f, p["ln2_g"], p["ln2_b"])
    logits = h2 @ p["w_out"]
    cache = None
    if keep_cache:
        cache = dict(ids=ids, x=x, q=q, k=k, v=v, att=att, o=o, h1=h1, u=u, t=t, gu=gu,
                     h2=h2, ln1=ln1_cache, ln2=ln2_cache, scale=scale)
    return logits, cache


def _last_logits(params: LmParams, ids: np.ndarray) -> np.ndarray:
    """Logits at the final position only, for decoding. Shape (B, V)."""
    p = params.arrays
    B, T = ids.shape
    if T > params.context_len:
        raise SequenceTooLong(f"sequence length {T} exceeds context length {params.context_len}")
    d = params.d_e
    h = params.heads
    dh = d // h
    x = p["tok_emb"][ids] + p["pos_emb"][:T]
    k = (x @ p["w_k"]).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
    v = (x @ p["w_v"]).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
    xl = x[:, -1:]
    q = (xl @ p["w_q"]).reshape(B, 1, h, dh).transpose(0, 2, 1, 3)
    att = _softmax((q @ k.transpose(0, 1, 3, 2)) / np.sqrt(dh))
    o = (att @ v).transpose(0, 2, 1, 3).reshape(B, 1, d)
    h1, _ = _layer_norm(xl + o @ p["w_o"], p["ln1_g"], p["ln1_b"])
    gu, _ = _gelu(h1 @ p["w_ff1"])
    h2, _ = _layer_norm(h1 + gu @ p["w_ff2"], p["ln2_g"], p["ln2_b"])
    return (h2 @ p["w_out"])[:, 0]


def _backward(params: LmParams, cache, dlogits):
    p = params.arrays
    B, T, V = dlogits.shape
    d = params.d_e
    h = params.heads
    dh = d // h
    g = {}

    h2 = cache["h2"]
    g["w_out"] = h2.reshape(-1, d).T @ dlogits.reshape(-1, V)
    dh2 = dlogits @ p["w_out"].T
    dr2, g["ln2_g"], g["ln2_b"] = _layer_norm_back(dh2, p["ln2_g"], cache["ln2"])
    dh1 = dr2.copy()
    df = dr2
    g["w_ff2"] = cache["gu"].reshape(-1, 4 * d).T @ df.reshape(-1, d)
    dgu = df @ p["w_ff2"].T
    du = _gelu_back(dgu, cache["u"], cache["t"])
    g["w_ff1"] = cache["h1"].reshape(-1, d).T @ du.reshape(-1, 4 * d)
    dh1 += du @ p["w_ff1"].T
    dr1, g["ln1_g"], g["ln1_b"] = _layer_norm_back(dh1, p["ln1_g"], cache["ln1"])
    dx = dr1.copy()
    da = dr1
    g["w_o"] = cache["o"].reshape(-1, d).T @ da.reshape(-1, d)
    do = (da @ p["w_o"].T).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
    att, q, k, v, scale = cache["att"], cache["q"], cache["k"], cache["v"], cache["scale"]
    dv = att.transpose(0, 1, 3, 2) @ do
    datt = do @ v.transpose(0, 1, 3, 2)
    dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
    dq = (dscores @ k) * scale
    dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale

    def merge(z):
        return z.transpose(0, 2, 1, 3).reshape(B, T, d)

    dq, dk, dv = merge(dq), merge(dk), merge(dv)
    x2 = cache["x"].reshape(-1, d)
    g["w_q"] = x2.T @ dq.reshape(-1, d)
    g["w_k"] = x2.T @ dk.reshape(-1, d)
    g["w_v"] = x2.T @ dv.reshape(-1, d)
    dx += dq @ p["w_q"].T + dk @ p["w_k"].T + dv @ p["w_v"].T

    g["pos_emb"] = np.zeros_like(p["pos_emb"])
    g["pos_emb"][:T] = dx.sum(axis=0)
    g["tok_emb"] = np.zeros_like(p["tok_emb"])
    np.add.at(g["tok_emb"], cache["ids"].reshape(-1), dx.reshape(-1, d))
    return LmParams(g, params.heads)


def _as_ids(seq):
    ids = seq.ids if isinstance(seq, TokenSequence) else seq
    return np.asarray(ids, dtype=np.int64)


def forward(params: LmParams, seq) -> np.ndarray:
    """Next-token distributions for every prefix of `seq`.

    Row t of the returned (T, V) array is P(w | ids[:t+1]), i.e. the
    distribution over the token at position t+1. It depends only on
    positions <= t.
    """
    ids = _as_ids(seq)[None, :]
    logits, _ = _forward(params, ids, keep_cache=False)
    return _softmax(logits[0])


def _pad_batch(seqs):
    lengths = [len(s) for s in seqs]
    T = max(lengths)
    ids = np.full((len(seqs), T), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = _as_ids(s)
    return ids, np.asarray(lengths)


def nll_loss_batch(params: LmParams, seqs):
    """Summed NLL over a list of sequences, its gradient, and the number of predicted tokens.

    Sequences are right-padded into one (B, T) array; padded targets are
    masked out, and causality keeps padding from touching real positions.
    """
    ids, lengths = _pad_batch(seqs)
    logits, cache = _forward(params, ids, keep_cache=True)
    B, T, V = logits.shape
    z = logits[:, :-1]
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=-1, keepdims=True)
    logp = z - np.log(sez)
    targets = ids[:, 1:]
    mask = np.arange(1, T)[None, :] < lengths[:, None]
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -float(np.sum(picked[mask]))
    probs = ez / sez
    dz = probs
    np.put_along_axis(dz, targets[..., None],
                      np.take_along_axis(dz, targets[..., None], axis=-1) - 1.0, axis=-1)
    dz *= mask[..., None]
    dlogits = np.zeros_like(logits)
    dlogits[:, :-1] = dz
    grad = _backward(params, cache, dlogits)
    return loss, grad, int(mask.sum())


def nll_loss(params: LmParams, seq: TokenSequence):
    """-sum_{i>=2} log P(w_i | w_<i) for one sequence, with its gradient."""
    loss, grad, _ = nll_loss_batch(params, [seq])
    return loss, grad


def sequence_logprob(params: LmParams, ids, start: int) -> float:
    """Sum of log P(ids[i] | ids[:i]) for i >= start."""
    ids = _as_ids(ids)
    logits, _ = _forward(params, ids[None, :], keep_cache=False)
    z = logits[0, start - 1:-1]
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(np.sum(logp[np.arange(len(z)), ids[start:]]))


# ----------------------------------------------------------------------------
# sampling

def _top_k_probs(logits, temperature, top_k, banned):
    z = logits / temperature
    if banned is not None:
        z = np.where(banned, -np.inf, z)
    V = z.shape[-1]
    k = min(top_k, V)
    if k < V:
        # stable sort keeps the lowest id first among ties
        order = np.argsort(-z, axis=-1, kind="stable")
        keep = np.zeros(z.shape, dtype=bool)
        np.put_along_axis(keep, order[:, :k], True, axis=-1)
        z = np.where(keep, z, -np.inf)
    return _softmax(z)


def sample_batch(params: LmParams, prefix, n: int, temperature: float = 1.0, top_k: int = 20,
                 seed=0, max_new_tokens=None, banned_ids=(), return_logprobs=False):
    """Draw `n` continuations of `prefix` in lock-step.

    Each row stops at EOS or when the context is full. PAD is always banned. Returns a list of
    generated id lists (EOS included when produced), one per draw. With
    `return_logprobs`, also returns for each draw the summed log-probability
    of its tokens under the plain model (temperature 1, no top-k, no bans).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if top_k < 1:
        raise ValueError("top_k must be positive")
    prefix = list(_as_ids(prefix))
    if prefix and prefix[-1] == EOS:
        prefix = prefix[:-1]
    if len(prefix) > params.context_len:
        raise SequenceTooLong("prefix longer than context")
    rng = np.random.default_rng(seed)
    budget = params.context_len - len(prefix)
    if max_new_tokens is not None:
        budget = min(budget, max_new_tokens)
    # PAD is never a valid continuation
    banned = np.zeros(params.vocab_size, dtype=bool)
    banned[[PAD, *banned_ids]] = True
    ids = np.tile(np.asarray(prefix, dtype=np.int64), (n, 1))
    done = np.zeros(n, dtype=bool)
    out = [[] for _ in range(n)]
    logprob = np.zeros(n)
    for _ in range(budget):
        last = _last_logits(params, ids)
        probs = _top_k_probs(last, temperature, top_k, banned)
        u = rng.random(n)
        cdf = np.cumsum(probs, axis=-1)
        nxt = np.minimum((cdf < (u * cdf[:, -1])[:, None]).sum(axis=-1), params.vocab_size - 1)
        # never land on a zero-probability slot through rounding
        zero = probs[np.arange(n), nxt] == 0
        if np.any(zero):
            nxt[zero] = np.argmax(probs[zero], axis=-1)
        z = last - last.max(axis=-1, keepdims=True)
        step_lp = z[np.arange(n), nxt] - np.log(np.exp(z).sum(axis=-1))
        for r in np.flatnonzero(~done):
            out[r].append(int(nxt[r]))
            logprob[r] += step_lp[r]
        done |= nxt == EOS
        if done.all():
            break
        ids = np.concatenate([ids, np.where(done, PAD, nxt)[:, None]], axis=1)
    if return_logprobs:
        return out, logprob.tolist()
    return out


def sample(params: LmParams, prefix, temperature: float = 1.0, top_k: int = 20, seed=0,
           banned_ids=()) -> TokenSequence:
    """Autoregressive top-k sampling until EOS or the context is full."""
    gen = sample_batch(params, prefix, 1, temperature, top_k, seed, banned_ids=banned_ids)[0]
    body = list(_as_ids(prefix))
    if body and body[-1] == EOS:
        body = body[:-1]
    body += gen
    if body[-1] != EOS:
        if len(body) >= params.context_len:
            body = body[: params.context_len - 1]
        body.append(EOS)
    return TokenSequence(tuple(body))
