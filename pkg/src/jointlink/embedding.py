"""Embedding tables, initialization, and the unit-norm projection."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence
from urllib.parse import quote, unquote

import numpy as np

# table names, also used as keys of sparse gradients
FEAT, MENTION, TARGET, CONTEXT, TYPE = "f", "m", "y", "yc", "t"
TABLES = (FEAT, MENTION, TARGET, CONTEXT, TYPE)
EXPORT_NAMES = {
    FEAT: "features",
    MENTION: "mentions",
    TARGET: "entity_target",
    CONTEXT: "entity_context",
    TYPE: "types",
}


@dataclass
class TrainConfig:
    d: int = 300
    alpha: float = 0.02
    lam: float = 1e-4
    Q: int = 5
    seed: int = 0
    max_iters: int = 100_000
    batch_size: int = 1
    tol: float = 1e-3
    window: int = 1000
    norm_cap: float = 1.0
    lr_decay: bool = False
    workers: int = 1
    quad_retries: int = 50
    log_every: int = 0
    edge_sampling: str = "weighted"  # or "uniform": uniform draws scaled by weight
    fe_negatives: str = "y"  # table for feature-entity negatives: "y" or "yc"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension d must be at least 1")
        if self.alpha <= 0:
            raise ValueError("learning rate must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.Q < 1:
            raise ValueError("Q must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.edge_sampling not in ("weighted", "uniform"):
            raise ValueError("edge_sampling must be 'weighted' or 'uniform'")
        if self.fe_negatives not in ("y", "yc"):
            raise ValueError("fe_negatives must be 'y' or 'yc'")
        if self.window < 2:
            raise ValueError("convergence window must be at least 2")


@dataclass
class ParamStore:
    d: int
    ids: dict[str, list]
    tables: dict[str, np.ndarray]
    index: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for name in TABLES:
            self.ids.setdefault(name, [])
            self.tables.setdefault(name, np.zeros((0, self.d)))
            if self.tables[name].shape != (len(self.ids[name]), self.d):
                raise ValueError(f"table {name!r} has shape {self.tables[name].shape}, "
                                 f"expected {(len(self.ids[name]), self.d)}")
        self.index = {name: {k: i for i, k in enumerate(self.ids[name])} for name in TABLES}

    def row(self, table: str, key) -> int:
        return self.index[table][key]

    def vec(self, table: str, key) -> np.ndarray:
        return self.tables[table][self.index[table][key]]

    def has(self, table: str, key) -> bool:
        return key in self.index[table]

    def copy(self) -> "ParamStore":
        return ParamStore(self.d, {k: list(v) for k, v in self.ids.items()},
                          {k: v.copy() for k, v in self.tables.items()})

    def max_norm(self) -> float:
        norms = [np.linalg.norm(t, axis=1).max() for t in self.tables.values() if len(t)]
        return float(max(norms, default=0.0))

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tables.values())


def init_params(
    features: Sequence = (),
    mids: Sequence[int] = (),
    entities: Sequence[str] = (),
    types: Sequence[str] = (),
    cfg: Optional[TrainConfig] = None,
    *,
    d: Optional[int] = None,
    seed: Optional[int] = None,
) -> ParamStore:
    """Random tables with every component uniform in [-0.5/d, 0.5/d]."""
    d = d if d is not None else (cfg.d if cfg is not None else None)
    seed = seed if seed is not None else (cfg.seed if cfg is not None else 0)
    if d is None or d < 1:
        raise ValueError("dimension d must be at least 1")
    rng = np.random.default_rng(seed)
    ids = {FEAT: list(features), MENTION: list(mids), TARGET: list(entities),
           CONTEXT: list(entities), TYPE: list(types)}
    bound = 0.5 / d
    tables = {name: rng.uniform(-bound, bound, size=(len(ids[name]), d)) for name in TABLES}
    return ParamStore(d, ids, tables)


def sigmoid(x):
    """Logistic function, evaluated without overflow for large |x|."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def project_norm(v: np.ndarray, cap: float = 1.0) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n <= cap:
        return v
    return v * (cap / n)


def project_rows(table: np.ndarray, rows: Iterable[int], cap: float = 1.0) -> None:
    rows = np.fromiter(set(rows), dtype=np.int64)
    if not len(rows):
        return
    norms = np.linalg.norm(table[rows], axis=1)
    over = norms > cap
    if over.any():
        r = rows[over]
        table[r] *= (cap / norms[over])[:, None]


def mention_vector_from_features(features: Iterable, params: ParamStore) -> np.ndarray:
    """Sum of the embeddings of known features; unknown ones are skipped."""
    idx = params.index[FEAT]
    rows = [idx[k] for k in (str(f) for f in features) if k in idx]
    if not rows:
        return np.zeros(params.d)
    return params.tables[FEAT][rows].sum(axis=0)


# -- text export ---------------------------------------------------------------


def _encode_id(key) -> str:
    return quote(str(key), safe="")


def save_text_table(path, keys: Sequence, table: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(keys)} {table.shape[1]}\n")
        for key, row in zip(keys, table):
            fh.write(_encode_id(key) + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_text_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header")
        count, dim = int(header[0]), int(header[1])
        keys = []
        table = np.zeros((count, dim))
        for i in range(count):
            parts = fh.readline().rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: row {i + 1} has {len(parts) - 1} values, expected {dim}")
            keys.append(unquote(parts[0]))
            table[i] = [float(x) for x in parts[1:]]
    return keys, table


def export_text(params: ParamStore, directory) -> list[Path]:
    """Write the five tables in word2vec text format, one file each."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in TABLES:
        path = directory / f"{EXPORT_NAMES[name]}.txt"
        save_text_table(path, params.ids[name], params.tables[name])
        paths.append(path)
    return paths
