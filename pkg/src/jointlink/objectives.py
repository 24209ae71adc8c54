"""Loss terms of the joint objective with negative sampling and analytic gradients.

Every ``*_loss_grad`` function returns ``(loss, grads)`` where ``grads`` maps
``(table_name, row)`` to the gradient of the loss with respect to that row.
Parameters are never modified here.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Collection, Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .datamodel import KnowledgeGraph, TrainingTuple
from .embedding import CONTEXT, FEAT, MENTION, TARGET, TYPE, ParamStore

EPS = 1e-12

Grads = dict[tuple[str, int], np.ndarray]


class SamplingError(RuntimeError):
    """No admissible negative sample could be drawn."""


def _clamp(p: float) -> tuple[float, bool]:
    if p < EPS:
        return EPS, True
    if p > 1.0 - EPS:
        return 1.0 - EPS, True
    return p, False


def _acc(grads: Grads, key: tuple[str, int], vec: np.ndarray) -> None:
    if key in grads:
        grads[key] = grads[key] + vec
    else:
        grads[key] = vec


# -- noise distribution -------------------------------------------------------


class NoiseTable:
    """Sampling distribution with P(item) proportional to count ** power."""

    def __init__(self, counts: Mapping[Hashable, float], power: float = 0.75,
                 rng: Optional[np.random.Generator] = None, seed: int = 0):
        if not counts:
            raise ValueError("noise table needs at least one item")
        self.items = sorted(counts, key=str)
        raw = np.array([counts[i] for i in self.items], dtype=float)
        if (raw <= 0).any():
            raise ValueError("all counts must be positive")
        weights = raw ** power
        self.probs = weights / weights.sum()
        self.cumulative = np.cumsum(weights)
        self.position = {item: i for i, item in enumerate(self.items)}
        self.rng = rng if rng is not None else np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.items)

    def prob(self, item) -> float:
        return float(self.probs[self.position[item]])

    def draw_indices(self, n: int) -> np.ndarray:
        u = self.rng.random(n) * self.cumulative[-1]
        return np.minimum(np.searchsorted(self.cumulative, u, side="right"), len(self.items) - 1)

    def draw(self, n: int) -> list:
        return [self.items[i] for i in self.draw_indices(n)]


def build_noise_table(counts: Mapping[Hashable, float], power: float = 0.75, **kwargs) -> NoiseTable:
    return NoiseTable(counts, power, **kwargs)


def sample_negatives(table: NoiseTable, Q: int, exclude: Collection = ()) -> list:
    """Q i.i.d. draws from the noise table, rejecting anything in ``exclude``."""
    banned = {table.position[e] for e in exclude if e in table.position}
    if len(banned) == len(table.items):
        raise SamplingError("every noise item is excluded")
    if Q <= 0:
        return []
    items = table.items
    if Q <= 64:
        out = []
        while len(out) < Q:
            out.extend(items[i] for i in table.draw_indices(Q - len(out)).tolist() if i not in banned)
        return out
    banned_arr = np.fromiter(banned, dtype=np.int64, count=len(banned))
    chunks: list[np.ndarray] = []
    have = 0
    while have < Q:
        idx = table.draw_indices(Q - have)
        if len(banned_arr):
            idx = idx[~np.isin(idx, banned_arr)]
        chunks.append(idx)
        have += len(idx)
    return [items[i] for i in np.concatenate(chunks).tolist()]


# -- skip-gram style terms ----------------------------------------------------


def _sig(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def _skipgram(params: ParamStore, src: tuple[str, object], pos: tuple[str, object],
              neg_table: str, negs: Sequence, w: float) -> tuple[float, Grads]:
    """-w [log s(u.v) + sum log s(-u.v_neg)] with gradients for u, v and every v_neg."""
    s_name, s_row = src[0], params.row(*src)
    p_name, p_row = pos[0], params.row(*pos)
    u = params.tables[s_name][s_row]
    v = params.tables[p_name][p_row]
    grads: Grads = {}

    p, clamped = _clamp(_sig(float(u @ v)))
    loss = -math.log(p)
    coef = 0.0 if clamped else -(1.0 - p)  # d(-log s(x))/dx
    grad_u = coef * v
    grads[p_name, p_row] = (w * coef) * u

    if len(negs):
        index = params.index[neg_table]
        rows = [index[n] for n in negs]
        vn = params.tables[neg_table][rows]
        for r, x, vk in zip(rows, (vn @ u).tolist(), vn):
            q, clamped = _clamp(_sig(x))
            loss -= math.log(1.0 - q)
            if clamped:
                continue
            grad_u = grad_u + q * vk  # d(-log s(-x))/dx = s(x)
            _acc(grads, (neg_table, r), (w * q) * u)

    _acc(grads, (s_name, s_row), w * grad_u)
    return w * loss, grads


def fe_loss_grad(feature, e_pos, negs: Sequence, params: ParamStore, w: float = 1.0,
                 neg_table: str = TARGET) -> tuple[float, Grads]:
    """Feature-entity term: positive on the entity target vector.

    Negatives default to other entities' target vectors, i.e. the same space
    the linker scores in. Pass ``neg_table=CONTEXT`` for the context-vector variant.
    """
    if neg_table not in (TARGET, CONTEXT):
        raise ValueError(f"neg_table must be {TARGET!r} or {CONTEXT!r}")
    return _skipgram(params, (FEAT, str(feature)), (TARGET, e_pos), neg_table, negs, w)


def ee_loss_grad(e_i, e_j, negs: Sequence, params: ParamStore, w_ij: float = 1.0) -> tuple[float, Grads]:
    return _skipgram(params, (TARGET, e_i), (CONTEXT, e_j), CONTEXT, negs, w_ij)


def et_loss_grad(e, t, negs: Sequence, params: ParamStore, w: float = 1.0) -> tuple[float, Grads]:
    """Entity-type term; the positive uses the true type, negatives sampled types."""
    return _skipgram(params, (TARGET, e), (TYPE, t), TYPE, negs, w)


# -- mention-entity hinge -----------------------------------------------------


def hinge_loss_grad(mid, e_gold, candidates: Sequence, params: ParamStore, lam: float = 0.0) -> tuple[float, Grads]:
    """max(0, 1 - [m.y_gold - max_other m.y]) + lam/2 (|m|^2 + |y_gold|^2)."""
    if e_gold not in candidates:
        raise ValueError(f"gold entity {e_gold!r} is not among the candidates")
    m_row = params.row(MENTION, mid)
    g_row = params.row(TARGET, e_gold)
    Y = params.tables[TARGET]
    m = params.tables[MENTION][m_row]
    y_gold = Y[g_row]

    loss = 0.5 * lam * (float(m @ m) + float(y_gold @ y_gold))
    grad_m = lam * m
    grads: Grads = {(TARGET, g_row): lam * y_gold}

    others = [c for c in candidates if c != e_gold]
    if others:
        rows = [params.row(TARGET, c) for c in others]
        scores = Y[rows] @ m
        best = int(np.argmax(scores))
        b_row = rows[best]
        margin = float(m @ y_gold) - float(scores[best])
        hinge = 1.0 - margin
        if hinge > 0:
            loss += hinge
            grad_m = grad_m - (y_gold - Y[b_row])
            _acc(grads, (TARGET, g_row), -m)
            _acc(grads, (TARGET, b_row), m.copy())
    grads[(MENTION, m_row)] = grad_m
    return float(loss), grads


# -- coherence ----------------------------------------------------------------


@dataclass(frozen=True)
class CoherenceQuad:
    e_i: str
    e_j: str
    mid_i: int
    mid_j: int


def _confidence_parts(quad: CoherenceQuad, params: ParamStore):
    yi_row, yj_row = params.row(TARGET, quad.e_i), params.row(TARGET, quad.e_j)
    mi_row, mj_row = params.row(MENTION, quad.mid_i), params.row(MENTION, quad.mid_j)
    Y, M = params.tables[TARGET], params.tables[MENTION]
    ie = _sig(float(Y[yi_row] @ Y[yj_row]))
    im = _sig(float(M[mi_row] @ M[mj_row]))
    return ie, im, (yi_row, yj_row, mi_row, mj_row)


def coherence_confidence(quad: CoherenceQuad, params: ParamStore) -> float:
    """Truth value of the implication (e_i, e_j) -> (m_i, m_j): I_e * I_m + 1 - I_e."""
    ie, im, _ = _confidence_parts(quad, params)
    return ie * im + 1.0 - ie


def _coherence_term(quad: CoherenceQuad, params: ParamStore, negative: bool, grads: Grads) -> float:
    """Loss of one quad (-log I, or -log(1 - I) for a negative) with gradients added into grads."""
    ie, im, (yi, yj, mi, mj) = _confidence_parts(quad, params)
    conf, clamped = _clamp(ie * im + 1.0 - ie)
    if negative:
        loss, scale = -math.log(1.0 - conf), 1.0 / (1.0 - conf)
    else:
        loss, scale = -math.log(conf), -1.0 / conf
    if clamped:
        return loss
    Y, M = params.tables[TARGET], params.tables[MENTION]
    d_ye = scale * (im - 1.0) * ie * (1.0 - ie)  # dI/d(y_i . y_j)
    d_mm = scale * ie * im * (1.0 - im)  # dI/d(m_i . m_j)
    _acc(grads, (TARGET, yi), d_ye * Y[yj])
    _acc(grads, (TARGET, yj), d_ye * Y[yi])
    _acc(grads, (MENTION, mi), d_mm * M[mj])
    _acc(grads, (MENTION, mj), d_mm * M[mi])
    return loss


def coherence_loss_grad(quad: CoherenceQuad, neg_quads: Sequence[CoherenceQuad],
                        params: ParamStore) -> tuple[float, Grads]:
    """-log I(quad) - sum log(1 - I(neg)), probabilities clamped away from 0 and 1."""
    grads: Grads = {}
    loss = _coherence_term(quad, params, False, grads)
    for neg in neg_quads:
        loss += _coherence_term(neg, params, True, grads)
    return loss, grads


@dataclass
class CorpusIndex:
    """Lookup tables over training mentions used by coherence sampling."""

    sentence_of: dict[int, tuple[str, int]] = field(default_factory=dict)
    gold_of: dict[int, str] = field(default_factory=dict)
    mentions_of: dict[str, list[int]] = field(default_factory=dict)

    @classmethod
    def from_tuples(cls, tuples: Iterable[TrainingTuple]) -> "CorpusIndex":
        idx = cls()
        by_entity = defaultdict(list)
        for t in tuples:
            if t.gold_entity is None:
                continue
            idx.sentence_of[t.span.mid] = t.span.sentence_ref
            idx.gold_of[t.span.mid] = t.gold_entity
            by_entity[t.gold_entity].append(t.span.mid)
        idx.mentions_of = dict(by_entity)
        return idx


def quad_violation(quad: CoherenceQuad, neg: CoherenceQuad, index: CorpusIndex, kg: KnowledgeGraph) -> Optional[str]:
    """Why ``neg`` is not an admissible negative for ``quad``, or None."""
    if neg.e_i != quad.e_i or neg.mid_i != quad.mid_i:
        return "negative must keep the i-side of the quad"
    if index.sentence_of.get(neg.mid_j) == index.sentence_of.get(quad.mid_i):
        return "mentions share a sentence"
    if kg.has_ee_edge(neg.e_i, neg.e_j):
        return "entities are linked in the knowledge graph"
    if neg.e_j == neg.e_i:
        return "replacement entity equals the anchor entity"
    if index.gold_of.get(neg.mid_j) != neg.e_j:
        return "replacement mention does not link to the replacement entity"
    return None


def sample_negative_quads(quad: CoherenceQuad, index: CorpusIndex, kg: KnowledgeGraph,
                          table: NoiseTable, Q: int, retries: int = 50) -> list[CoherenceQuad]:
    """Replace the j-side of ``quad`` Q times with admissible (entity, mention) pairs.

    Raises SamplingError once ``retries * Q`` draws have been spent.
    """
    out: list[CoherenceQuad] = []
    rng = table.rng
    budget = max(1, retries) * max(1, Q)
    anchor_sentence = index.sentence_of.get(quad.mid_i)
    while len(out) < Q:
        if budget <= 0:
            raise SamplingError(f"could not draw {Q} negative quads for {quad}")
        budget -= 1
        e = table.items[int(table.draw_indices(1)[0])]
        if e == quad.e_i or kg.has_ee_edge(quad.e_i, e):
            continue
        mids = index.mentions_of.get(e)
        if not mids:
            continue
        mid = mids[int(rng.integers(len(mids)))]
        if index.sentence_of[mid] == anchor_sentence:
            continue
        out.append(CoherenceQuad(quad.e_i, e, quad.mid_i, mid))
    return out
