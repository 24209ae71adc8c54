"""Context features of a mention and the global feature vocabulary."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .datamodel import MentionSpan, Sentence, Token, TrainingTuple


class Kind(str, Enum):
    HEAD = "HEAD"
    TOKEN = "TOKEN"
    UNIGRAM = "UNIGRAM"
    BIGRAM = "BIGRAM"
    POS = "POS"
    SHAPE = "SHAPE"
    LENGTH = "LENGTH"
    CHARSEQ = "CHARSEQ"
    BROWN = "BROWN"
    VERB = "VERB"


@dataclass(frozen=True)
class Feature:
    kind: Kind
    value: str

    def __post_init__(self):
        if not self.value:
            raise ValueError("feature value must be non-empty")

    def __str__(self) -> str:
        return f"{self.kind.value}_{self.value}"

    @classmethod
    def parse(cls, text: str) -> "Feature":
        kind, _, value = text.partition("_")
        return cls(Kind(kind), value)


DEFAULT_STOPWORDS = frozenset(
    """a an the of in on at to for from by with and or but is are was were be been
    being am it its this that these those as into than then there their his her he
    she they we you i do does did has have had not no so such which who whom""".split()
)

_COPULA = {"is", "are", "was", "were", "am", "be", "been", "being", "'s", "'re", "'m"}
_IRREGULAR = {
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do", "doing": "do",
    "went": "go", "gone": "go", "goes": "go",
    "said": "say", "says": "say",
    "made": "make", "makes": "make",
    "took": "take", "taken": "take",
}


@dataclass
class FeatureConfig:
    window: int = 2
    char_k: int = 3
    brown_bits: int = 8
    stopwords: frozenset = DEFAULT_STOPWORDS

    @classmethod
    def from_file(cls, path) -> "FeatureConfig":
        """Read a ``key=value`` file with keys window, char_k, brown_bits, stopwords."""
        cfg = cls()
        base = Path(path).parent
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = (s.strip() for s in line.partition("="))
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                if key in ("window", "char_k", "brown_bits"):
                    setattr(cfg, key, int(value))
                elif key == "stopwords":
                    sw_path = Path(value)
                    if not sw_path.is_absolute():
                        sw_path = base / sw_path
                    cfg.stopwords = load_stopwords(sw_path)
                else:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        return cfg


def load_stopwords(path) -> frozenset:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


def _char_class(ch: str) -> str:
    if ch.isupper():
        return "A"
    if ch.islower():
        return "a"
    if ch.isdigit():
        return "0"
    return "-"


def word_shape(token: str) -> str:
    """Map characters to A/a/0/- classes.

    The first character keeps its own symbol; after it every run of one class
    is collapsed to a single symbol, so a run never yields more than two.

    >>> word_shape("German"), word_shape("USA"), word_shape("a")
    ('Aa', 'AA', 'a')
    """
    if not token:
        return ""
    out = [_char_class(token[0])]
    prev = None
    for ch in token[1:]:
        c = _char_class(ch)
        if c != prev:
            out.append(c)
            prev = c
    return "".join(out)


def char_sequences(surface: str, k: int = 3) -> list[str]:
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(surface) < k:
        return [surface]
    return [surface[i:i + k] for i in range(len(surface) - k + 1)]


def is_verb(tok: Token) -> bool:
    return tok.pos is not None and (tok.pos.startswith("VB") or tok.pos == "VERB" or tok.pos == "AUX")


def verb_lemma(surface: str) -> str:
    """A very small lemmatizer: copulas and a few irregulars, else lowercase."""
    low = surface.lower()
    if low in _COPULA:
        return "be"
    return _IRREGULAR.get(low, low)


def nearest_verb(sentence: Sentence, span: MentionSpan) -> Optional[Token]:
    """Verb-tagged token closest to the span boundary; ties go left."""
    best = None
    best_dist = None
    for i, tok in enumerate(sentence.tokens):
        if span.start <= i < span.end or not is_verb(tok):
            continue
        dist = span.start - i if i < span.start else i - span.end + 1
        if best_dist is None or dist < best_dist:
            # left tokens are visited first, so strict < keeps the left one on ties
            best, best_dist = tok, dist
    return best


def _head_token(tokens: Sequence[Token]) -> Token:
    for tok in reversed(tokens):
        if tok.pos is not None and (tok.pos.startswith("NN") or tok.pos in ("NOUN", "PROPN")):
            return tok
    return tokens[-1]


def _is_context_word(tok: Token, stopwords: frozenset) -> bool:
    return tok.surface.lower() not in stopwords and any(ch.isalnum() for ch in tok.surface)


def context_window(sentence: Sentence, span: MentionSpan, cfg: FeatureConfig) -> tuple[list[str], list[str]]:
    """Up to ``cfg.window`` content words on each side, stopwords and punctuation skipped."""
    left = [t.surface for t in sentence.tokens[:span.start] if _is_context_word(t, cfg.stopwords)]
    right = [t.surface for t in sentence.tokens[span.end:] if _is_context_word(t, cfg.stopwords)]
    if cfg.window <= 0:
        return [], []
    return left[-cfg.window:], right[:cfg.window]


def extract_features(sentence: Sentence, span: MentionSpan, cfg: Optional[FeatureConfig] = None) -> list[Feature]:
    """Context features of one mention, without duplicates, in a fixed order."""
    cfg = cfg or FeatureConfig()
    tokens = sentence.tokens[span.start:span.end]
    feats: list[Feature] = []

    feats.append(Feature(Kind.HEAD, _head_token(tokens).surface))
    for tok in tokens:
        if tok.surface.lower() not in cfg.stopwords:
            feats.append(Feature(Kind.TOKEN, tok.surface))

    left, right = context_window(sentence, span, cfg)
    for w in left + right:
        feats.append(Feature(Kind.UNIGRAM, w))
    inner = [t.surface for t in tokens]
    seq = left + inner + right
    lo, hi = len(left), len(left) + len(inner)
    for i in range(len(seq) - 1):
        # skip bigrams entirely inside the mention
        if lo <= i and i + 1 < hi:
            continue
        feats.append(Feature(Kind.BIGRAM, f"{seq[i]} {seq[i + 1]}"))

    if all(t.pos is not None for t in tokens):
        feats.append(Feature(Kind.POS, "_".join(t.pos for t in tokens)))
    feats.append(Feature(Kind.SHAPE, " ".join(word_shape(t.surface) for t in tokens)))
    feats.append(Feature(Kind.LENGTH, str(len(tokens))))
    for gram in char_sequences(span.surface, cfg.char_k):
        feats.append(Feature(Kind.CHARSEQ, gram))
    for tok in tokens:
        if tok.brown_cluster is not None:
            feats.append(Feature(Kind.BROWN, f"{cfg.brown_bits}_{tok.brown_cluster[:cfg.brown_bits]}"))
    verb = nearest_verb(sentence, span)
    if verb is not None:
        feats.append(Feature(Kind.VERB, verb_lemma(verb.surface)))

    return list(dict.fromkeys(feats))


@dataclass
class FeatureVocab:
    index: dict[Feature, int] = field(default_factory=dict)
    features: list[Feature] = field(default_factory=list)
    # (feature index, entity) -> weighted co-occurrence count
    pair_counts: dict[tuple[int, str], float] = field(default_factory=dict)
    entity_counts: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.features)

    def __contains__(self, feat: Feature) -> bool:
        return feat in self.index

    def add(self, feat: Feature) -> int:
        idx = self.index.get(feat)
        if idx is None:
            idx = self.index[feat] = len(self.features)
            self.features.append(feat)
        return idx

    def count(self, feat: Feature, entity: str) -> float:
        idx = self.index.get(feat)
        return 0.0 if idx is None else self.pair_counts.get((idx, entity), 0.0)


def build_feature_vocab(
    tuples: Iterable[TrainingTuple],
    sentences: Mapping[tuple[str, int], Sentence] | Iterable[Sentence],
    cfg: Optional[FeatureConfig] = None,
) -> FeatureVocab:
    """Vocabulary plus (feature, entity) co-occurrence counts over ``tuples``.

    Tuples without a gold entity contribute features but no counts.
    """
    if not isinstance(sentences, Mapping):
        sentences = {s.key: s for s in sentences}
    cfg = cfg or FeatureConfig()
    vocab = FeatureVocab()
    pairs: dict[tuple[int, str], float] = defaultdict(float)
    ent: dict[str, float] = defaultdict(float)
    for t in tuples:
        sent = sentences[t.span.sentence_ref]
        for feat in extract_features(sent, t.span, cfg):
            idx = vocab.add(feat)
            if t.gold_entity is not None:
                pairs[idx, t.gold_entity] += t.weight
                ent[t.gold_entity] += t.weight
    vocab.pair_counts = dict(pairs)
    vocab.entity_counts = dict(ent)
    return vocab
