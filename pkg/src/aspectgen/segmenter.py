"""Rule-based decomposition of a product description into five aspects."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import ConfigError
from .textmodel import tokenize


class Aspect(enum.Enum):
    LanguageAppeal = 0
    FactualInformation = 1
    ProductDimensions = 2
    UniqueAttributes = 3
    BrandGuarantees = 4

    @property
    def control_token(self):
        return f"<{self.name}>"


ASPECTS = tuple(Aspect)

_LEXICON_RULE = re.compile(r"^@appeal>=(\d+)$")
_SENTENCE_END = re.compile(r"(?:(?<=[.!?])|(?<=[.!?][\"”’')]))\s+")
_KEY_VALUE = re.compile(r"(?:^|;\s*)[A-Za-z][\w &/'’-]*:\s")


@lru_cache(maxsize=None)
def appeal_lexicon() -> frozenset:
    text = resources.files("aspectgen").joinpath("data/appeal_lexicon.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def appeal_hits(text: str) -> int:
    lex = appeal_lexicon()
    return sum(1 for t in tokenize(text) if t in lex)


@dataclass(frozen=True)
class Rule:
    aspect: Aspect
    priority: int
    pattern: str

    def __post_init__(self):
        m = _LEXICON_RULE.match(self.pattern)
        object.__setattr__(self, "_min_hits", int(m.group(1)) if m else None)
        object.__setattr__(self, "_regex", None if m else re.compile(self.pattern, re.IGNORECASE))

    def matches(self, sentence: str) -> bool:
        if self._min_hits is not None:
            return appeal_hits(sentence) >= self._min_hits
        return self._regex.search(sentence) is not None


class AspectRuleSet:
    """Per-aspect ordered rules. Priorities are unique within an aspect."""

    def __init__(self, rules, version: str = "custom"):
        self.rules = tuple(sorted(rules, key=lambda r: (-r.priority, r.aspect.value)))
        self.version = version
        for aspect in ASPECTS:
            prios = [r.priority for r in self.rules if r.aspect is aspect]
            if not prios:
                raise ConfigError(f"rule set has no rules for {aspect.name}")
            if len(set(prios)) != len(prios):
                raise ConfigError(f"duplicate priority within {aspect.name}")

    def for_aspect(self, aspect):
        return [r for r in self.rules if r.aspect is aspect]

    def classify(self, sentence: str):
        """Aspect of the highest-priority matching rule, or None."""
        for rule in self.rules:
            if rule.matches(sentence):
                return rule.aspect
        return None

    @classmethod
    def parse(cls, text: str, version: str = "custom"):
        rules = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                m = re.match(r"#\s*aspect rules (v\S+)", line)
                if m:
                    version = m.group(1)
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ConfigError(f"rule line {n}: expected 3 tab-separated fields")
            kind, prio, pattern = parts
            try:
                rules.append(Rule(Aspect[kind], int(prio), pattern))
            except KeyError:
                raise ConfigError(f"rule line {n}: unknown aspect {kind!r}") from None
            except (ValueError, re.error) as exc:
                raise ConfigError(f"rule line {n}: {exc}") from None
        return cls(rules, version)

    def dumps(self) -> str:
        lines = [f"# aspect rules {self.version}"]
        for aspect in ASPECTS:
            for r in self.for_aspect(aspect):
                lines.append(f"{aspect.name}\t{r.priority}\t{r.pattern}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.parse(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read rule file {path}: {exc}") from None


@lru_cache(maxsize=None)
def default_rules() -> AspectRuleSet:
    text = resources.files("aspectgen").joinpath("data/default_rules.tsv").read_text("utf-8")
    return AspectRuleSet.parse(text)


def split_sentences(description: str) -> list[str]:
    """Sentences on . ! ? boundaries and line breaks; "Key: v; key: v" runs
    are further cut at the semicolons."""
    out = []
    for line in description.splitlines():
        line = " ".join(line.split())
        if not line:
            continue
        for sent in _SENTENCE_END.split(line):
            if _KEY_VALUE.search(sent):
                pieces = sent.split(";")
            else:
                pieces = [sent]
            out.extend(p.strip() for p in pieces if p.strip())
    return out


@dataclass(frozen=True)
class AspectBundle:
    """Sentences in original order, each tagged with an aspect or None (residual)."""

    spans: tuple = ()

    @property
    def segments(self) -> dict:
        seg = {a: [] for a in ASPECTS}
        for aspect, text in self.spans:
            if aspect is not None:
                seg[aspect].append(text)
        return seg

    @property
    def residual(self) -> list:
        return [text for aspect, text in self.spans if aspect is None]

    def text(self, aspect) -> str:
        return " ".join(t for a, t in self.spans if a is aspect)

    def sentences(self) -> list:
        return [t for _, t in self.spans]


def segment(description: str, rules: AspectRuleSet | None = None) -> AspectBundle:
    rules = rules or default_rules()
    return AspectBundle(tuple((rules.classify(s), s) for s in split_sentences(description)))


def coverage_vector(bundle: AspectBundle) -> list:
    seg = bundle.segments
    return [1 if seg[a] else 0 for a in ASPECTS]
