"""Glue: from loaded data to a trained parameter store."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .datamodel import CandidateDictionary, KnowledgeGraph, Sentence, TrainingTuple, filter_linkable, sentence_index
from .embedding import ParamStore, TrainConfig
from .features import FeatureConfig, FeatureVocab, build_feature_vocab
from .trainer import EdgeSets, TrainReport, build_edge_sets, params_for, train

logger = logging.getLogger(__name__)


@dataclass
class FitResult:
    params: ParamStore
    report: TrainReport
    vocab: FeatureVocab
    edgesets: EdgeSets
    dropped: int


def fit(
    sentences: Sequence[Sentence],
    tuples: Sequence[TrainingTuple],
    kg: KnowledgeGraph,
    dictionary: CandidateDictionary,
    cfg: TrainConfig,
    feature_cfg: Optional[FeatureConfig] = None,
    quad_observer: Optional[Callable] = None,
) -> FitResult:
    linkable, dropped = filter_linkable(tuples, dictionary)
    vocab = build_feature_vocab(linkable, sentence_index(sentences), feature_cfg)
    edgesets = build_edge_sets(linkable, vocab, kg, dictionary, cfg)
    params = params_for(edgesets, vocab, dictionary, kg, linkable, cfg)
    logger.info("edge sets: %s; |F|=%d", edgesets.sizes(), len(vocab))
    params, report = train(edgesets, params, cfg, quad_observer)
    return FitResult(params, report, vocab, edgesets, dropped)
