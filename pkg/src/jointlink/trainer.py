"""Edge-set construction and the alternating edge-sampling SGD loop."""

from __future__ import annotations

import json
import logging
import math
import struct
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .candidates import candidates_for
from .datamodel import CandidateDictionary, KnowledgeGraph, TrainingTuple
from .embedding import TABLES, ParamStore, TrainConfig, init_params
from .features import FeatureVocab
from .objectives import (
    CoherenceQuad,
    CorpusIndex,
    NoiseTable,
    SamplingError,
    coherence_loss_grad,
    ee_loss_grad,
    et_loss_grad,
    fe_loss_grad,
    hinge_loss_grad,
    sample_negative_quads,
    sample_negatives,
)

logger = logging.getLogger(__name__)

OBJECTIVES = ("FE", "MY", "EE", "ET", "COH")


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class EdgeSets:
    fe_edges: list[tuple[str, str, float]] = field(default_factory=list)
    my_items: list[tuple[int, str, tuple[str, ...]]] = field(default_factory=list)
    ee_edges: list[tuple[str, str, float]] = field(default_factory=list)
    et_edges: list[tuple[str, str, float]] = field(default_factory=list)
    quads: list[CoherenceQuad] = field(default_factory=list)
    entity_noise: Optional[NoiseTable] = None
    kg_noise: Optional[NoiseTable] = None
    type_noise: Optional[NoiseTable] = None
    quad_noise: Optional[NoiseTable] = None
    corpus_index: CorpusIndex = field(default_factory=CorpusIndex)
    kg: KnowledgeGraph = field(default_factory=KnowledgeGraph)

    def sizes(self) -> dict[str, int]:
        return {"FE": len(self.fe_edges), "MY": len(self.my_items), "EE": len(self.ee_edges),
                "ET": len(self.et_edges), "COH": len(self.quads)}

    def noise_tables(self) -> list[NoiseTable]:
        return [t for t in (self.entity_noise, self.kg_noise, self.type_noise, self.quad_noise) if t is not None]

    def reseed(self, seed: int) -> None:
        tables = self.noise_tables()
        for table, child in zip(tables, np.random.SeedSequence(seed).spawn(len(tables))):
            table.rng = np.random.default_rng(child)


def build_edge_sets(
    tuples: Sequence[TrainingTuple],
    vocab: FeatureVocab,
    kg: KnowledgeGraph,
    dictionary: CandidateDictionary,
    cfg: Optional[TrainConfig] = None,
) -> EdgeSets:
    """Collect the five training edge sets and their noise tables.

    ``tuples`` should already be restricted to linkable mentions.
    """
    seed = cfg.seed if cfg is not None else 0
    es = EdgeSets(kg=kg)
    es.fe_edges = [(str(vocab.features[f]), e, w) for (f, e), w in sorted(vocab.pair_counts.items())]

    linkable = [t for t in tuples if t.gold_entity is not None]
    for t in linkable:
        cands = candidates_for(t.span.surface, dictionary)
        if t.gold_entity not in cands:
            cands = sorted(set(cands) | {t.gold_entity})
        es.my_items.append((t.span.mid, t.gold_entity, tuple(cands)))

    es.ee_edges = kg.ee_edges
    es.et_edges = kg.et_edges

    by_sentence = defaultdict(list)
    for t in linkable:
        by_sentence[t.span.sentence_ref].append(t)
    for ref in by_sentence:
        group = sorted(by_sentence[ref], key=lambda t: t.span.mid)
        for a, b in combinations(group, 2):
            es.quads.append(CoherenceQuad(a.gold_entity, b.gold_entity, a.span.mid, b.span.mid))
    es.corpus_index = CorpusIndex.from_tuples(linkable)

    if vocab.entity_counts:
        es.entity_noise = NoiseTable(vocab.entity_counts)
        es.quad_noise = NoiseTable(vocab.entity_counts)
    degree: dict[str, float] = defaultdict(float)
    for a, b, w in es.ee_edges:
        degree[a] += w
        degree[b] += w
    if degree:
        es.kg_noise = NoiseTable(degree)
    type_counts: dict[str, float] = defaultdict(float)
    for _, t, w in es.et_edges:
        type_counts[t] += w
    if type_counts:
        es.type_noise = NoiseTable(type_counts)
    es.reseed(seed)

    for name, n in es.sizes().items():
        if n == 0:
            logger.warning("edge set %s is empty; that objective will be skipped", name)
    return es


def params_for(edgesets: EdgeSets, vocab: FeatureVocab, dictionary: CandidateDictionary,
               kg: KnowledgeGraph, tuples: Iterable[TrainingTuple], cfg: TrainConfig) -> ParamStore:
    """Initialize a store covering every id the edge sets and inference can touch."""
    tuples = list(tuples)
    entities = set(dictionary.entities()) | kg.entities | {t.gold_entity for t in tuples if t.gold_entity}
    mids = sorted({t.span.mid for t in tuples})
    return init_params([str(f) for f in vocab.features], mids, sorted(entities), sorted(kg.types), cfg)


@dataclass
class TrainReport:
    losses: dict[str, list[float]] = field(default_factory=lambda: {k: [] for k in OBJECTIVES})
    total: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    iterations: int = 0
    converged: bool = False
    mode: str = "single-threaded"
    skipped_quads: int = 0

    def record(self, values: dict[str, float]) -> None:
        for k in OBJECTIVES:
            self.losses[k].append(values.get(k, math.nan))
        finite = [v for v in values.values() if not math.isnan(v)]
        self.total.append(float(sum(finite)))
        self.iterations += 1


def converged(report_or_series, tol: float = 1e-3, window: int = 1000) -> bool:
    """True iff the mean of the last ``window`` totals is within relative ``tol`` of the window before."""
    if window < 2:
        raise ValueError("window must be at least 2")
    series = report_or_series.total if isinstance(report_or_series, TrainReport) else report_or_series
    if len(series) < 2 * window:
        return False
    arr = np.asarray(series[-2 * window:], dtype=float)
    prev, last = arr[:window].mean(), arr[window:].mean()
    return abs(last - prev) <= tol * max(abs(prev), 1e-12)


class _Runner:
    """One sampling thread's view of the shared store."""

    def __init__(self, es: EdgeSets, params: ParamStore, cfg: TrainConfig, seed: int,
                 quad_observer: Optional[Callable] = None):
        self.es = es
        self.params = params
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.quad_observer = quad_observer
        self.skipped_quads = 0
        self._cums: dict[str, np.ndarray] = {}

    def _apply(self, grads, lr: float) -> None:
        cap = self.cfg.norm_cap
        tables = self.params.tables
        for (name, row), g in grads.items():
            v = tables[name][row]
            v -= lr * g
            n = math.sqrt(float(v @ v))
            if n > cap:
                v *= cap / n

    def _cum(self, name: str) -> Optional[np.ndarray]:
        """Cumulative edge weights when edges are drawn in proportion to weight."""
        if self.cfg.edge_sampling != "weighted":
            return None
        if name not in self._cums:
            self._cums[name] = np.cumsum([w for *_, w in getattr(self.es, name)])
        return self._cums[name]

    def _unit(self, w: float) -> float:
        # weighted draws already carry the multiplicity
        return 1.0 if self.cfg.edge_sampling == "weighted" else w

    def _pick(self, n: int, cum: Optional[np.ndarray] = None) -> np.ndarray:
        if cum is None:
            return self.rng.integers(n, size=self.cfg.batch_size)
        u = self.rng.random(self.cfg.batch_size) * cum[-1]
        return np.minimum(np.searchsorted(cum, u, side="right"), n - 1)

    def step(self, it: int) -> dict[str, float]:
        es, params, cfg = self.es, self.params, self.cfg
        lr = cfg.alpha * max(1.0 - it / cfg.max_iters, 1e-4) if cfg.lr_decay else cfg.alpha
        out: dict[str, float] = {}

        if es.fe_edges and es.entity_noise is not None:
            acc = 0.0
            for k in self._pick(len(es.fe_edges), self._cum("fe_edges")):
                f, e, w = es.fe_edges[k]
                w = self._unit(w)
                negs = sample_negatives(es.entity_noise, cfg.Q, (e,)) if len(es.entity_noise) > 1 else []
                loss, g = fe_loss_grad(f, e, negs, params, w, cfg.fe_negatives)
                self._apply(g, lr)
                acc += loss
            out["FE"] = acc / cfg.batch_size

        if es.my_items:
            acc = 0.0
            for k in self._pick(len(es.my_items)):
                mid, gold, cands = es.my_items[k]
                loss, g = hinge_loss_grad(mid, gold, cands, params, cfg.lam)
                self._apply(g, lr)
                acc += loss
            out["MY"] = acc / cfg.batch_size

        if es.ee_edges and es.kg_noise is not None:
            acc = 0.0
            for k in self._pick(len(es.ee_edges), self._cum("ee_edges")):
                a, b, w = es.ee_edges[k]
                w = self._unit(w)
                # undirected: each endpoint serves as context of the other
                for src, dst in ((a, b), (b, a)):
                    negs = sample_negatives(es.kg_noise, cfg.Q, (dst,)) if len(es.kg_noise) > 1 else []
                    loss, g = ee_loss_grad(src, dst, negs, params, w)
                    self._apply(g, lr)
                    acc += loss
            out["EE"] = acc / cfg.batch_size

        if es.et_edges and es.type_noise is not None:
            acc = 0.0
            for k in self._pick(len(es.et_edges), self._cum("et_edges")):
                e, t, w = es.et_edges[k]
                w = self._unit(w)
                negs = sample_negatives(es.type_noise, cfg.Q, (t,)) if len(es.type_noise) > 1 else []
                loss, g = et_loss_grad(e, t, negs, params, w)
                self._apply(g, lr)
                acc += loss
            out["ET"] = acc / cfg.batch_size

        if es.quads and es.quad_noise is not None:
            acc, n = 0.0, 0
            for k in self._pick(len(es.quads)):
                quad = es.quads[k]
                try:
                    negs = sample_negative_quads(quad, es.corpus_index, es.kg, es.quad_noise,
                                                 cfg.Q, cfg.quad_retries)
                except SamplingError:
                    self.skipped_quads += 1
                    continue
                if self.quad_observer is not None:
                    self.quad_observer(quad, negs)
                loss, g = coherence_loss_grad(quad, negs, params)
                self._apply(g, lr)
                acc += loss
                n += 1
            if n:
                out["COH"] = acc / n

        for name, value in out.items():
            if not math.isfinite(value):
                raise TrainingError(f"non-finite {name} loss at iteration {it}")
        return out


def train(
    edgesets: EdgeSets,
    params: ParamStore,
    cfg: TrainConfig,
    quad_observer: Optional[Callable[[CoherenceQuad, list[CoherenceQuad]], None]] = None,
) -> tuple[ParamStore, TrainReport]:
    """Run alternating edge-sampling SGD in place on ``params``.

    Each iteration visits FE, MY, EE, ET and COH in that order, stops when
    :func:`converged` holds or after ``cfg.max_iters`` iterations.  With
    ``cfg.workers > 1`` threads update the store without locking and the
    result is not reproducible.
    """
    if params.d != cfg.d:
        raise ValueError(f"params have dimension {params.d}, config says {cfg.d}")
    edgesets.reseed(cfg.seed)
    report = TrainReport()
    start = time.perf_counter()

    if cfg.workers <= 1:
        runner = _Runner(edgesets, params, cfg, cfg.seed, quad_observer)
        for it in range(cfg.max_iters):
            report.record(runner.step(it))
            if cfg.log_every and (it + 1) % cfg.log_every == 0:
                logger.info("iter %d %s", it + 1, " ".join(
                    f"{k}={report.losses[k][-1]:.4f}" for k in OBJECTIVES))
            if (it + 1) % cfg.window == 0 and converged(report, cfg.tol, cfg.window):
                report.converged = True
                break
        report.skipped_quads = runner.skipped_quads
    else:
        report.mode = f"lock-free parallel ({cfg.workers} workers)"
        lock = threading.Lock()
        seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.workers)
        share = [cfg.max_iters // cfg.workers + (i < cfg.max_iters % cfg.workers) for i in range(cfg.workers)]
        errors: list[BaseException] = []
        runners = []

        def work(i: int) -> None:
            # each thread gets its own noise-table random streams
            local = EdgeSets(**{**edgesets.__dict__})
            for name in ("entity_noise", "kg_noise", "type_noise", "quad_noise"):
                table = getattr(edgesets, name)
                if table is not None:
                    clone = object.__new__(NoiseTable)
                    clone.__dict__.update(table.__dict__)
                    setattr(local, name, clone)
            local.reseed(int(seeds[i]))
            runner = _Runner(local, params, cfg, int(seeds[i]) + 1, quad_observer)
            runners.append(runner)
            try:
                for it in range(share[i]):
                    values = runner.step(it)
                    with lock:
                        report.record(values)
            except BaseException as exc:  # surfaced after join
                errors.append(exc)

        threads = [threading.Thread(target=work, args=(i,)) for i in range(cfg.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        report.skipped_quads = sum(r.skipped_quads for r in runners)

    report.wall_time = time.perf_counter() - start
    logger.info("trained %d iterations in %.2fs (%s)", report.iterations, report.wall_time, report.mode)
    return params, report


# -- checkpoints --------------------------------------------------------------

MAGIC = b"JLCKPT\n"
VERSION = 1


def save_checkpoint(params: ParamStore, path) -> None:
    """Write a self-describing checkpoint: magic, JSON header, raw float64 rows."""
    header = {
        "version": VERSION,
        "d": params.d,
        "ids": {name: params.ids[name] for name in TABLES},
        "rows": {name: int(params.tables[name].shape[0]) for name in TABLES},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in TABLES:
            fh.write(np.ascontiguousarray(params.tables[name], dtype="<f8").tobytes())


def load_checkpoint(path, expected_dim: Optional[int] = None) -> ParamStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise CheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    try:
        header = json.loads(data[pos:pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: truncated or corrupt header") from None
    pos += n
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {header.get('version')} != {VERSION}")
    d = int(header["d"])
    if expected_dim is not None and d != expected_dim:
        raise CheckpointError(f"{path}: dimension mismatch, checkpoint has d={d}, expected {expected_dim}")
    tables = {}
    for name in TABLES:
        rows = int(header["rows"][name])
        size = rows * d * 8
        if len(data) < pos + size:
            raise CheckpointError(f"{path}: truncated while reading table {name!r}")
        tables[name] = np.frombuffer(data, dtype="<f8", count=rows * d, offset=pos).reshape(rows, d).astype(float)
        pos += size
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    ids = header["ids"]
    return ParamStore(d, {name: list(ids[name]) for name in TABLES}, tables)
