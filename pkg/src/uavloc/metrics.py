"""Retrieval metrics: rank-K recall, Recall@Top1%, AP/mAP and the spatial SDM_K score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Mapping, Optional, Sequence

from . import _jsonl
from .errors import ConfigError, DataError
from .geo import GeoPoint, degree_distance
from .retrieval import RankedList

REPORT_FORMAT = "uavloc/eval"
DEFAULT_S = 5e3
DEFAULT_K_VALUES = (1, 3, 5, 10)


class UndefinedAPError(DataError):
    pass


@dataclass(frozen=True)
class SdmConfig:
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    s: float = DEFAULT_S

    def __post_init__(self) -> None:
        if not self.k_values or min(self.k_values) < 1:
            raise ConfigError("k values must be >= 1")
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ConfigError("s must be a positive finite number")


def indicator(l_q: str, l_i: str) -> int:
    return 1 if l_q == l_i else 0


def recall_at_k(ranked: RankedList, truth_class: str, k: int) -> int:
    """1 when the true class appears among the first ``k`` entries."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    if not ranked.entries:
        raise DataError(f"ranked list for {ranked.query_id!r} is empty")
    return int(any(e.class_id == truth_class for e in ranked.entries[:k]))


def top1pct_k(gallery_size: int) -> int:
    if gallery_size < 1:
        raise ConfigError("gallery_size must be >= 1")
    return -(-gallery_size // 100)


def recall_top1pct(ranked: RankedList, truth_class: str, gallery_size: int) -> int:
    return recall_at_k(ranked, truth_class, top1pct_k(gallery_size))


def average_precision(ranked: RankedList, truth_class: str, n_relevant: Optional[int] = None) -> float:
    """Mean of precision@rank over the relevant items.

    ``n_relevant`` is the number of gallery items of ``truth_class``; relevant
    items missing from a truncated list contribute zero. Defaults to the
    count found in the list.
    """
    hits = 0
    total = 0.0
    for rank, e in enumerate(ranked.entries, start=1):
        if e.class_id == truth_class:
            hits += 1
            total += hits / rank
    n = hits if n_relevant is None else n_relevant
    if n < 1:
        raise UndefinedAPError(f"no relevant gallery items for class {truth_class!r}")
    if hits > n:
        raise DataError(f"found {hits} relevant items but n_relevant={n}")
    return total / n


def sdm_weights(k: int) -> list[int]:
    return [k - i + 1 for i in range(1, k + 1)]


def sdm_from_distances(distances: Sequence[float], s: float = DEFAULT_S) -> float:
    """SDM over the given rank-ordered degree distances; ``K = len(distances)``."""
    k = len(distances)
    if k < 1:
        raise ConfigError("need at least one distance")
    w = sdm_weights(k)
    return sum(wi * math.exp(-s * d) for wi, d in zip(w, distances)) / sum(w)


def sdm_k(ranked: RankedList, truth_geo: GeoPoint, k: int, s: float = DEFAULT_S) -> float:
    """Rank-weighted mean of ``exp(-s * d_i)`` over the top ``k`` entries.

    ``d_i`` is the raw degree distance from ``truth_geo`` to the rank-i entry;
    rank i carries weight ``k - i + 1`` and the weights are normalized by
    ``k (k + 1) / 2``.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if s <= 0:
        raise ConfigError("s must be > 0")
    if len(ranked.entries) < k:
        raise DataError(f"SDM_{k} needs {k} ranked entries, {ranked.query_id!r} has {len(ranked.entries)}")
    return sdm_from_distances([degree_distance(truth_geo, e.geo) for e in ranked.entries[:k]], s)


@dataclass(frozen=True)
class QueryTruth:
    class_id: str
    geo: GeoPoint
    n_relevant: int


@dataclass
class QueryEval:
    query_id: str
    class_id: str
    sdm: dict[int, float]
    recall: dict[int, int]
    recall_top1pct: int
    hit_rank: Optional[int]
    average_precision: float


@dataclass
class EvalReport:
    config: SdmConfig
    gallery_size: int
    per_class: bool
    queries: list[QueryEval] = field(default_factory=list)
    mean_sdm: dict[int, float] = field(default_factory=dict)
    recall: dict[int, float] = field(default_factory=dict)
    recall_top1pct: float = 0.0
    mean_ap: float = 0.0


def evaluate_query(ranked: RankedList, truth: QueryTruth, config: SdmConfig, gallery_size: int) -> QueryEval:
    hit_rank = next((i for i, e in enumerate(ranked.entries, start=1) if e.class_id == truth.class_id), None)
    return QueryEval(
        query_id=ranked.query_id,
        class_id=truth.class_id,
        sdm={k: sdm_k(ranked, truth.geo, k, config.s) for k in config.k_values},
        recall={k: recall_at_k(ranked, truth.class_id, k) for k in config.k_values},
        recall_top1pct=recall_top1pct(ranked, truth.class_id, gallery_size),
        hit_rank=hit_rank,
        average_precision=average_precision(ranked, truth.class_id, truth.n_relevant),
    )


def _mean(values: Sequence[float]) -> float:
    return fmean(values) if values else float("nan")


def evaluate(
    ranked_lists: Sequence[RankedList],
    truths: Mapping[str, QueryTruth],
    config: SdmConfig = SdmConfig(),
    gallery_size: int | None = None,
    per_class: bool = False,
) -> EvalReport:
    """Score every ranked list and aggregate.

    Aggregates are unweighted means over queries in ``query_id`` order, or,
    with ``per_class``, means of per-class means.
    """
    if gallery_size is None:
        raise ConfigError("gallery_size is required")
    report = EvalReport(config, gallery_size, per_class)
    for rl in sorted(ranked_lists, key=lambda r: r.query_id):
        if rl.query_id not in truths:
            raise DataError(f"no ground truth for query {rl.query_id!r}")
        report.queries.append(evaluate_query(rl, truths[rl.query_id], config, gallery_size))

    def agg(get) -> float:
        if not per_class:
            return _mean([get(q) for q in report.queries])
        groups: dict[str, list[float]] = {}
        for q in report.queries:
            groups.setdefault(q.class_id, []).append(get(q))
        return _mean([_mean(groups[c]) for c in sorted(groups)])

    for k in config.k_values:
        report.mean_sdm[k] = agg(lambda q, k=k: q.sdm[k])
        report.recall[k] = agg(lambda q, k=k: q.recall[k])
    report.recall_top1pct = agg(lambda q: q.recall_top1pct)
    report.mean_ap = agg(lambda q: q.average_precision)
    return report


def write_report(report: EvalReport, path: str | Path, **extra) -> None:
    head = _jsonl.header(
        REPORT_FORMAT,
        s=report.config.s,
        k_values=list(report.config.k_values),
        gallery_size=report.gallery_size,
        top1pct_k=top1pct_k(report.gallery_size),
        per_class=report.per_class,
        **extra,
    )
    rows = [
        _jsonl.dumps(
            {
                "query_id": q.query_id,
                "class_id": q.class_id,
                "sdm": {str(k): v for k, v in q.sdm.items()},
                "recall": {str(k): v for k, v in q.recall.items()},
                "recall_top1pct": q.recall_top1pct,
                "hit_rank": q.hit_rank,
                "ap": q.average_precision,
            }
        )
        for q in report.queries
    ]
    rows.append(_jsonl.dumps({"aggregate": report_summary(report)}))
    _jsonl.write_lines(path, head, rows)


def report_summary(report: EvalReport) -> dict:
    def num(v: float):
        return None if math.isnan(v) else v

    return {
        "queries": len(report.queries),
        "sdm": {str(k): num(v) for k, v in report.mean_sdm.items()},
        "recall": {str(k): num(v) for k, v in report.recall.items()},
        "recall_top1pct": num(report.recall_top1pct),
        "map": num(report.mean_ap),
    }
