"""Filtered ranking metrics and the per-relation / per-degree-group breakdowns."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import (FilterIndex, TripleStore, build_filter_index, csv_string, degree_stats,
                   in_degrees)
from .errors import VocabMismatchError

HR_KS = (1, 3, 10)


def filtered_rank(scores, true_tail: int, filter_set=(), pessimistic: bool = False) -> int:
    """Rank of ``true_tail`` after removing the other known-true tails.

    Optimistic by default: only strictly higher scores push the rank down.
    The pessimistic variant also counts ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if not 0 <= true_tail < n:
        raise ValueError(f"true tail {true_tail} outside [0, {n})")
    keep = np.ones(n, dtype=bool)
    removed = [j for j in filter_set if j != true_tail]
    if removed:
        removed = np.asarray(removed, dtype=np.int64)
        if removed.min() < 0 or removed.max() >= n:
            raise ValueError("filter set references an entity outside the score vector")
        keep[removed] = False
    keep[true_tail] = False
    target = scores[true_tail]
    competitors = scores[keep]
    beaten = competitors >= target if pessimistic else competitors > target
    return int(beaten.sum()) + 1


@dataclass
class RankResult:
    head: int
    relation: int
    tail: int
    rank: int


@dataclass
class MetricsReport:
    mrr: float
    hr: dict[int, float]
    n_queries: int
    tie_mode: str = "optimistic"
    per_relation: dict[int, tuple[int, float]] = field(default_factory=dict)
    per_degree_group: list[tuple[int, float]] = field(default_factory=list)

    @classmethod
    def from_ranks(cls, ranks, relations=None, tie_mode="optimistic") -> "MetricsReport":
        ranks = np.asarray(ranks, dtype=np.float64)
        if ranks.size == 0:
            return cls(0.0, {k: 0.0 for k in HR_KS}, 0, tie_mode)
        per_rel = {}
        if relations is not None:
            relations = np.asarray(relations)
            for r in np.unique(relations):
                sel = ranks[relations == r]
                per_rel[int(r)] = (int(sel.size), float(np.mean(sel <= 10)))
        return cls(
            # fsum is exact before the final rounding, so accumulation order never matters
            mrr=math.fsum(1.0 / ranks) / ranks.size,
            hr={k: float(np.mean(ranks <= k)) for k in HR_KS},
            n_queries=int(ranks.size),
            tie_mode=tie_mode,
            per_relation=per_rel,
        )

    def to_csv(self) -> str:
        header = ["tie_mode", "n_queries", "mrr"] + [f"hr@{k}" for k in HR_KS]
        row = [self.tie_mode, self.n_queries, f"{self.mrr:.6f}"] + [f"{self.hr[k]:.6f}" for k in HR_KS]
        return csv_string(header, [row])


def _check_vocab(model, store: TripleStore):
    if model.n_entities != store.n_entities or model.n_relations != store.n_relations:
        raise VocabMismatchError(
            f"model covers {model.n_entities} entities / {model.n_relations} relations, "
            f"store has {store.n_entities} / {store.n_relations}")


def rank_triples(model, triples: np.ndarray, filter_index: FilterIndex, batch_size: int = 256,
                 pessimistic: bool = False) -> np.ndarray:
    """Filtered tail ranks for every row of ``triples`` (an ``(n, 3)`` array)."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ranks = np.empty(len(triples), dtype=np.int64)
    for lo in range(0, len(triples), batch_size):
        chunk = triples[lo:lo + batch_size]
        scores = np.array(model.scores(chunk[:, 0], chunk[:, 1]), dtype=np.float64)
        rows = np.arange(len(chunk))
        target = scores[rows, chunk[:, 2]].copy()
        mask_rows, mask_cols = [], []
        for i, (h, r, t) in enumerate(chunk.tolist()):
            others = [j for j in filter_index[(h, r)] if j != t]
            mask_rows.extend([i] * len(others))
            mask_cols.extend(others)
        scores[mask_rows, mask_cols] = -np.inf
        scores[rows, chunk[:, 2]] = -np.inf
        if pessimistic:
            beaten = scores >= target[:, None]
        else:
            beaten = scores > target[:, None]
        ranks[lo:lo + len(chunk)] = beaten.sum(axis=1) + 1
    return ranks


def evaluate_split(model, store: TripleStore, split: str = "test",
                   filter_index: FilterIndex | None = None, batch_size: int = 256,
                   pessimistic: bool = False) -> MetricsReport:
    """MRR and HR@{1,3,10} over every triple of ``split`` (both directions via inverses)."""
    _check_vocab(model, store)
    if filter_index is None:
        filter_index = build_filter_index(store)
    triples = store.split(split)
    ranks = rank_triples(model, triples, filter_index, batch_size, pessimistic)
    return MetricsReport.from_ranks(ranks, triples[:, 1],
                                    "pessimistic" if pessimistic else "optimistic")


@dataclass
class RelationRow:
    relation: int
    name: str
    count: int
    hr10: float
    cumulative_hr10: float
    links: int


def per_relation_report(model, store: TripleStore, split: str = "test",
                        filter_index: FilterIndex | None = None,
                        ranks: np.ndarray | None = None) -> list[RelationRow]:
    """HR@10 per base relation (inverse queries folded in), most frequent first."""
    _check_vocab(model, store)
    triples = store.split(split)
    if ranks is None:
        if filter_index is None:
            filter_index = build_filter_index(store)
        ranks = rank_triples(model, triples, filter_index)
    n_base = store.n_base_relations or store.n_relations
    base = triples[:, 1] % n_base
    links = np.bincount(store.base_triples()[:, 1], minlength=n_base)
    rows = []
    for r in np.unique(base):
        sel = ranks[base == r]
        rows.append([int(r), int(sel.size), int(np.sum(sel <= 10))])
    rows.sort(key=lambda x: (-x[1], x[0]))
    out, hits_total, count_total = [], 0, 0
    for r, count, hits in rows:
        hits_total += hits
        count_total += count
        out.append(RelationRow(r, store.vocab.relation_names[r], count, hits / count,
                               hits_total / count_total, int(links[r])))
    return out


def relation_report_csv(rows: list[RelationRow]) -> str:
    return csv_string(
        ["relation", "name", "count", "hr@10", "cumulative_hr@10", "links"],
        [[r.relation, r.name, r.count, f"{r.hr10:.6f}", f"{r.cumulative_hr10:.6f}", r.links]
         for r in rows])


@dataclass
class DegreeGroupReport:
    groups: list[tuple[int, float]]  # (group index, hr@10)
    members: list[list[int]]  # entity indices per group, descending in-degree
    counts: list[int]  # evaluated triples per group
    empty: bool = False

    def to_csv(self) -> str:
        rows = [[g, n, f"{hr:.6f}", " ".join(map(str, m))]
                for (g, hr), n, m in zip(self.groups, self.counts, self.members)]
        return csv_string(["group", "n_triples", "hr@10", "entities"], rows)


def top_degree_groups(store: TripleStore, top_k: int = 20, group_size: int = 5) -> list[list[int]]:
    """Top-``top_k`` entities by link count, ordered by incoming links and chunked."""
    if top_k < 1 or group_size < 1:
        raise ValueError("top_k and group_size must be >= 1")
    top = [e for e, _ in degree_stats(store)[:top_k]]
    indeg = in_degrees(store)
    # stable sort keeps the total-degree order among equal in-degrees
    top.sort(key=lambda e: -indeg[e])
    return [top[i:i + group_size] for i in range(0, len(top), group_size)]


def degree_group_report(model, store: TripleStore, top_k: int = 20, group_size: int = 5,
                        split: str = "test", filter_index: FilterIndex | None = None) -> DegreeGroupReport:
    """HR@10 on links among the highest-degree entities, bucketed by the predicted entity's group."""
    _check_vocab(model, store)
    groups = top_degree_groups(store, top_k, group_size)
    group_of = {e: g for g, members in enumerate(groups) for e in members}
    triples = store.split(split)
    sel = np.array([h in group_of and t in group_of for h, _, t in triples.tolist()], dtype=bool)
    chosen = triples[sel] if len(triples) else triples
    if len(chosen) == 0:
        return DegreeGroupReport([], groups, [], empty=True)
    if filter_index is None:
        filter_index = build_filter_index(store)
    ranks = rank_triples(model, chosen, filter_index)
    bucket = np.array([group_of[t] for t in chosen[:, 2].tolist()])
    out, counts = [], []
    for g in range(len(groups)):
        r = ranks[bucket == g]
        counts.append(int(r.size))
        out.append((g, float(np.mean(r <= 10)) if r.size else float("nan")))
    return DegreeGroupReport(out, groups, counts)
