"""Knowledge-graph ingestion, augmentation, filtering, batching and graph statistics.

Triples are kept as ``(n, 3)`` int64 arrays with columns ``head, relation, tail``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DatasetFormatError, ParseError, StateError

SPLITS = ("train", "valid", "test")
INVERSE_SUFFIX = "_reverse"


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class Vocabulary:
    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.entity_names)) != len(self.entity_names):
            raise ValueError("entity names must be unique")
        if len(set(self.relation_names)) != len(self.relation_names):
            raise ValueError("relation names must be unique")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def entity_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.entity_names)}

    def relation_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.relation_names)}

    def digest(self) -> str:
        """Stable hash of both name lists; used to pair checkpoints with stores."""
        h = hashlib.sha256()
        for names in (self.entity_names, self.relation_names):
            for name in names:
                h.update(name.encode("utf-8"))
                h.update(b"\x00")
            h.update(b"\x01")
        return h.hexdigest()


def _as_triples(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return arr.reshape(-1, 3)


@dataclass(frozen=True)
class TripleStore:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    vocab: Vocabulary
    # relation count before inverse augmentation; None while un-augmented
    n_base_relations: int | None = None

    def __post_init__(self):
        for name in SPLITS:
            arr = _as_triples(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if len(arr):
                if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= self.n_entities:
                    raise ValueError(f"{name}: entity index out of range")
                if arr[:, 1].min() < 0 or arr[:, 1].max() >= self.n_relations:
                    raise ValueError(f"{name}: relation index out of range")

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    @property
    def augmented(self) -> bool:
        return self.n_base_relations is not None

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)

    def base_triples(self) -> np.ndarray:
        """All triples with inverse relations stripped."""
        everything = self.all_triples()
        if not self.augmented:
            return everything
        return everything[everything[:, 1] < self.n_base_relations]

    def triples(self, split: str) -> Iterator[Triple]:
        for h, r, t in self.split(split):
            yield Triple(int(h), int(r), int(t))


def _read_split(path: str) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(fields)}")
            rows.append((fields[0], fields[1], fields[2]))
    return rows


def load_dataset(directory: str | os.PathLike) -> TripleStore:
    """Load ``train.txt``/``valid.txt``/``test.txt`` from ``directory``.

    Indices follow first appearance over train, then valid, then test.
    """
    directory = os.fspath(directory)
    raw = {}
    for name in SPLITS:
        path = os.path.join(directory, f"{name}.txt")
        if not os.path.isfile(path):
            raise DatasetFormatError(f"missing split file: {path}")
        raw[name] = _read_split(path)

    ents: dict[str, int] = {}
    rels: dict[str, int] = {}
    encoded = {}
    for name in SPLITS:
        out = np.empty((len(raw[name]), 3), dtype=np.int64)
        for i, (h, r, t) in enumerate(raw[name]):
            out[i, 0] = ents.setdefault(h, len(ents))
            out[i, 1] = rels.setdefault(r, len(rels))
            out[i, 2] = ents.setdefault(t, len(ents))
        encoded[name] = out
    vocab = Vocabulary(tuple(ents), tuple(rels))
    return TripleStore(vocab=vocab, **encoded)


def write_dataset(store: TripleStore, directory: str | os.PathLike) -> None:
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    ents, rels = store.vocab.entity_names, store.vocab.relation_names
    for name in SPLITS:
        with open(os.path.join(directory, f"{name}.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in store.split(name):
                fh.write(f"{ents[h]}\t{rels[r]}\t{ents[t]}\n")


def augment_inverse(store: TripleStore) -> TripleStore:
    """Add ``(t, r + n_r, h)`` for every ``(h, r, t)`` in each split."""
    if store.augmented:
        raise StateError("store is already inverse-augmented")
    n_r = store.n_relations
    names = store.vocab.relation_names
    taken = set(names)
    inverse_names = []
    for name in names:
        inv = name + INVERSE_SUFFIX
        while inv in taken:
            inv += INVERSE_SUFFIX
        taken.add(inv)
        inverse_names.append(inv)
    vocab = Vocabulary(store.vocab.entity_names, names + tuple(inverse_names))

    def double(arr):
        inv = np.stack([arr[:, 2], arr[:, 1] + n_r, arr[:, 0]], axis=1)
        return np.concatenate([arr, inv], axis=0)

    return TripleStore(
        train=double(store.train),
        valid=double(store.valid),
        test=double(store.test),
        vocab=vocab,
        n_base_relations=n_r,
    )


def strip_inverse(store: TripleStore) -> TripleStore:
    """Undo :func:`augment_inverse`."""
    if not store.augmented:
        return store
    n = store.n_base_relations
    keep = lambda arr: arr[arr[:, 1] < n]  # noqa: E731
    vocab = Vocabulary(store.vocab.entity_names, store.vocab.relation_names[:n])
    return TripleStore(keep(store.train), keep(store.valid), keep(store.test), vocab)


class FilterIndex:
    """Map ``(head, relation)`` to every tail known true in any split."""

    def __init__(self, mapping: dict[tuple[int, int], frozenset[int]]):
        self._map = mapping

    def __getitem__(self, key: tuple[int, int]) -> frozenset[int]:
        return self._map.get((int(key[0]), int(key[1])), frozenset())

    def __len__(self):
        return len(self._map)

    def __contains__(self, key):
        return (int(key[0]), int(key[1])) in self._map

    def keys(self):
        return self._map.keys()

    def as_dict(self) -> dict[tuple[int, int], frozenset[int]]:
        return dict(self._map)


def build_filter_index(store: TripleStore) -> FilterIndex:
    if not store.augmented:
        raise StateError("filter index expects an inverse-augmented store")
    acc: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in store.all_triples().tolist():
        acc[(h, r)].add(t)
    return FilterIndex({k: frozenset(v) for k, v in acc.items()})


@dataclass
class QueryBatch:
    heads: np.ndarray
    relations: np.ndarray
    labels: np.ndarray  # (batch, n_e)

    def __len__(self):
        return len(self.heads)


class BatchSequence(Sequence):
    """Lazy, seed-shuffled sequence of 1-N labelled query batches.

    Label rows are materialized per batch only, so large graphs never hold
    the full ``n_queries x n_e`` label matrix.
    """

    def __init__(self, queries: np.ndarray, tails: list[np.ndarray], n_entities: int,
                 batch_size: int, label_smoothing: float):
        self.queries = queries
        self._tails = tails
        self.n_entities = n_entities
        self.batch_size = batch_size
        self.label_smoothing = label_smoothing

    def __len__(self):
        return -(-len(self.queries) // self.batch_size)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        lo = i * self.batch_size
        hi = min(lo + self.batch_size, len(self.queries))
        q = self.queries[lo:hi]
        ls = self.label_smoothing
        labels = np.full((hi - lo, self.n_entities), ls / self.n_entities)
        for row, tails in enumerate(self._tails[lo:hi]):
            labels[row, tails] = 1.0 - ls
        return QueryBatch(q[:, 0].copy(), q[:, 1].copy(), labels)


def make_batches(store: TripleStore, batch_size: int = 128, label_smoothing: float = 0.0,
                 seed: int = 0) -> BatchSequence:
    """Group train triples into distinct ``(head, relation)`` queries and shuffle them."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError("label_smoothing must lie in [0, 1)")
    if len(store.train) == 0:
        raise DatasetFormatError("train split is empty")
    groups: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in store.train.tolist():
        groups[(h, r)].add(t)
    keys = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(keys))
    queries = np.array([keys[i] for i in order], dtype=np.int64).reshape(-1, 2)
    tails = [np.array(sorted(groups[keys[i]]), dtype=np.int64) for i in order]
    return BatchSequence(queries, tails, store.n_entities, batch_size, label_smoothing)


def poison(store: TripleStore, alpha: float, seed: int = 0) -> TripleStore:
    """Append ``floor(alpha * n_train)`` uniformly random, previously unseen triples to train."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    n_new = int(np.floor(alpha * len(store.train)))
    if n_new == 0:
        return store
    n_e, n_r = store.n_entities, store.n_relations
    # re-draws also avoid valid/test so the splits stay disjoint
    seen = {tuple(t) for t in store.all_triples().tolist()}
    if n_new > n_e * n_r * n_e - len(seen):
        raise ValueError("not enough unseen triples to poison with")
    rng = np.random.default_rng(seed)
    added = []
    while len(added) < n_new:
        h, r, t = (int(rng.integers(n_e)), int(rng.integers(n_r)), int(rng.integers(n_e)))
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        added.append((h, r, t))
    train = np.concatenate([store.train, np.array(added, dtype=np.int64)], axis=0)
    return replace(store, train=train)


def degree_stats(store: TripleStore) -> list[tuple[int, int]]:
    """Per-entity link counts (in + out, un-augmented), sorted descending.

    Ties are broken by entity index so the output is deterministic.
    """
    triples = store.base_triples()
    counts = np.bincount(triples[:, 0], minlength=store.n_entities)
    counts = counts + np.bincount(triples[:, 2], minlength=store.n_entities)
    order = np.lexsort((np.arange(store.n_entities), -counts))
    return [(int(e), int(counts[e])) for e in order if counts[e] > 0]


def in_degrees(store: TripleStore) -> np.ndarray:
    triples = store.base_triples()
    return np.bincount(triples[:, 2], minlength=store.n_entities)


def relation_incidence(store: TripleStore) -> np.ndarray:
    """``(n_r, n_e)`` counts of triples of each relation touching each entity."""
    triples = store.all_triples()
    inc = np.zeros((store.n_relations, store.n_entities))
    np.add.at(inc, (triples[:, 1], triples[:, 0]), 1.0)
    # a self-loop touches its entity once
    loops = triples[:, 0] != triples[:, 2]
    np.add.at(inc, (triples[loops, 1], triples[loops, 2]), 1.0)
    return inc


def relation_correlation(store: TripleStore) -> np.ndarray:
    """Pearson correlation between entity-incidence vectors of every relation pair."""
    inc = relation_incidence(store)
    centered = inc - inc.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    ok = norms > 0
    corr = np.zeros((store.n_relations, store.n_relations))
    c = centered[ok] / norms[ok, None]
    corr[np.ix_(ok, ok)] = np.clip(c @ c.T, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def write_csv(path_or_buffer, header: Sequence[str], rows) -> None:
    """CSV with header row, comma separated, LF line endings."""
    own = isinstance(path_or_buffer, (str, os.PathLike))
    fh = open(path_or_buffer, "w", encoding="utf-8", newline="") if own else path_or_buffer
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if own:
            fh.close()


def csv_string(header, rows) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


@dataclass
class DegreeCurve:
    """Rank/links curve used for the power-law plot."""

    ranks: np.ndarray
    links: np.ndarray
    entities: list[int] = field(default_factory=list)

    def loglog_slope(self) -> float:
        keep = self.links > 0
        x, y = np.log(self.ranks[keep]), np.log(self.links[keep])
        return float(np.polyfit(x, y, 1)[0]) if keep.sum() > 1 else float("nan")


def degree_curve(store: TripleStore) -> DegreeCurve:
    stats = degree_stats(store)
    links = np.array([c for _, c in stats], dtype=np.int64)
    return DegreeCurve(np.arange(1, len(stats) + 1), links, [e for e, _ in stats])
