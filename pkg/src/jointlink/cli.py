"""Command line entry point: train, link, eval, relatedness, synth."""

from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from typing import Optional, Sequence

from . import synthetic
from .candidates import augment, load_articles
from .datamodel import (
    FormatError,
    filter_linkable,
    load_corpus,
    load_dictionary,
    load_knowledge_graph,
    sentence_index,
)
from .embedding import TrainConfig, export_text
from .features import FeatureConfig
from .linker import (
    NoCandidateError,
    align_predictions,
    entity_relatedness_rank,
    link_all,
    macro_accuracy,
    micro_accuracy,
    ndcg_at_k,
    read_predictions,
    same_mention_subset_eval,
    write_predictions,
)
from .objectives import SamplingError
from .pipeline import fit
from .trainer import CheckpointError, TrainingError, load_checkpoint, save_checkpoint

logger = logging.getLogger("jointlink")


def _feature_cfg(path: Optional[str]) -> Optional[FeatureConfig]:
    return FeatureConfig.from_file(path) if path else None


def cmd_train(args) -> int:
    sentences, tuples = load_corpus(args.corpus)
    kg = load_knowledge_graph(args.kg)
    dictionary = load_dictionary(args.dict)
    if args.aug:
        start = max((t.span.mid for t in tuples), default=-1) + 1
        extra_s, extra_t = augment(load_articles(args.aug, start), dictionary, args.min_links, args.aug_weight)
        sentences, tuples = sentences + extra_s, tuples + extra_t
    cfg = TrainConfig(d=args.dim, alpha=args.lr, lam=args.lam, Q=args.negatives, seed=args.seed,
                      max_iters=args.iters, window=args.window, tol=args.tol, workers=args.workers,
                      lr_decay=args.lr_decay, log_every=args.log_every)
    result = fit(sentences, tuples, kg, dictionary, cfg, _feature_cfg(args.features))
    save_checkpoint(result.params, args.out)
    if args.export:
        export_text(result.params, args.export)
    rep = result.report
    print(f"trained {rep.iterations} iterations in {rep.wall_time:.1f}s ({rep.mode}); "
          f"converged={rep.converged}; dropped {result.dropped} unlinkable mentions; wrote {args.out}")
    return 0


def cmd_link(args) -> int:
    params = load_checkpoint(args.ckpt)
    sentences, tuples = load_corpus(args.corpus)
    dictionary = load_dictionary(args.dict)
    preds, unlinkable = link_all(sentence_index(sentences), [t.span for t in tuples], dictionary,
                                 params, _feature_cfg(args.features))
    write_predictions(args.out, preds)
    print(f"linked {len(preds)} mentions, {len(unlinkable)} without candidates; wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    _, golds = load_corpus(args.gold)
    if args.dict:
        golds, _ = filter_linkable(golds, load_dictionary(args.dict))
    preds = align_predictions(read_predictions(args.preds), golds)
    if args.subset == "same-mention":
        micro, macro, n_docs = same_mention_subset_eval(golds, preds)
        if n_docs == 0:
            print("same-mention subset is empty")
            return 0
        print(f"documents\t{n_docs}\nmicro\t{micro:.4f}\nmacro_document\t{macro:.4f}")
        return 0
    print(f"micro\t{micro_accuracy(preds, golds):.4f}")
    print(f"macro_{args.level}\t{macro_accuracy(preds, golds, args.level):.4f}")
    return 0


def _load_queries(path) -> dict[str, dict[str, float]]:
    queries: dict[str, dict[str, float]] = defaultdict(dict)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) not in (2, 3):
                raise FormatError(f"{path}: line {lineno}: expected query, candidate[, gain]")
            try:
                gain = float(fields[2]) if len(fields) == 3 else 1.0
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad gain {fields[2]!r}") from None
            queries[fields[0]][fields[1]] = gain
    return queries


def cmd_relatedness(args) -> int:
    params = load_checkpoint(args.ckpt)
    try:
        ks = [int(k) for k in args.k.split(",")]
    except ValueError:
        raise ValueError(f"bad --k list {args.k!r}") from None
    queries = _load_queries(args.queries)
    if not queries:
        raise ValueError("no relatedness queries")
    totals = {k: 0.0 for k in ks}
    for query, rel in queries.items():
        ranked = entity_relatedness_rank(query, sorted(rel), params)
        for k in ks:
            totals[k] += ndcg_at_k(ranked, rel, k)
    for k in ks:
        print(f"NDCG@{k}\t{totals[k] / len(queries):.4f}")
    return 0


def cmd_synth(args) -> int:
    data = synthetic.generate(seed=args.seed)
    paths = synthetic.write(args.out, data)
    print(" ".join(f"{k}={v}" for k, v in paths.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointlink", description="Joint embedding entity linker.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train embeddings and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--aug", help="anchored-article file for training-set augmentation")
    p.add_argument("--aug-weight", type=float, default=1.0, help="weight of augmented tuples")
    p.add_argument("--min-links", type=int, default=5)
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=100_000, help="maximum iterations")
    p.add_argument("--window", type=int, default=1000, help="convergence window")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--lr-decay", action="store_true")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--features", help="feature config file (key=value lines)")
    p.add_argument("--export", help="also write word2vec text tables to this directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("link", help="link the mentions of a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--features")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval", help="score predictions against gold links")
    p.add_argument("--preds", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--level", choices=("sentence", "document"), default="sentence")
    p.add_argument("--subset", choices=("same-mention",))
    p.add_argument("--dict", help="drop gold mentions without candidates before scoring")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("relatedness", help="NDCG@k of entity relatedness rankings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--queries", required=True, help="TSV: query, candidate, gain")
    p.add_argument("--k", default="1,5,10")
    p.set_defaults(func=cmd_relatedness)

    p = sub.add_parser("synth", help="write the synthetic planted-signal corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, FormatError, CheckpointError, TrainingError, SamplingError,
            NoCandidateError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
