"""Flight-trace replay: localize an ordered query sequence and measure the error.

Neighbor search anchors each step on the previous step's predicted
position (never on ground truth, which a GNSS-denied aircraft does not
have). The first step is bootstrapped with a global search unless an
initial anchor is supplied.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean, median
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import _jsonl
from .dataset import SampleRecord
from .embed import EmbeddingStore
from .errors import ConfigError, DataError, RuntimeDomainError
from .geo import GeoPoint, meters_distance
from .metrics import DEFAULT_S, recall_at_k, sdm_k
from .retrieval import EmptyDomainError, GeoIndex, RankedList, rank_global, rank_neighbor, format_distance

log = logging.getLogger(__name__)

REPORT_FORMAT = "uavloc/replay"
DEFAULT_K_VALUES = (1, 3, 5)
KINDS = ("global", "neighbor")
ON_EMPTY = ("fallback_global", "fail")
ANCHORS = ("predicted", "truth")


class ReplayStepError(RuntimeDomainError):
    def __init__(self, step: int, query_id: str, cause: EmptyDomainError):
        super().__init__(f"step {step} ({query_id}): {cause}")
        self.step = step
        self.query_id = query_id
        self.center = cause.center
        self.radius_m = cause.radius_m


@dataclass(frozen=True)
class Strategy:
    kind: str = "global"
    radius_m: Optional[float] = None
    bootstrap: Union[str, GeoPoint] = "global"
    on_empty: str = "fallback_global"
    # Re-run a global search when the neighbor top-1 feature distance exceeds this; off by default.
    reglobal_distance: Optional[float] = None
    # "truth" anchors on ground truth; a diagnostic oracle only.
    anchor: str = "predicted"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"strategy kind must be one of {KINDS}")
        if self.kind == "neighbor":
            if self.radius_m is None or not self.radius_m > 0:
                raise ConfigError("neighbor strategy needs radius_m > 0")
        elif self.radius_m is not None:
            raise ConfigError("global strategy does not take a radius")
        if self.on_empty not in ON_EMPTY:
            raise ConfigError(f"on_empty must be one of {ON_EMPTY}")
        if not (isinstance(self.bootstrap, GeoPoint) or self.bootstrap == "global"):
            raise ConfigError("bootstrap must be 'global' or a GeoPoint")
        if self.anchor not in ANCHORS:
            raise ConfigError(f"anchor must be one of {ANCHORS}")

    def describe(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "neighbor":
            d["radius_m"] = self.radius_m
            d["bootstrap"] = self.bootstrap.as_list() if isinstance(self.bootstrap, GeoPoint) else self.bootstrap
            d["on_empty"] = self.on_empty
            d["reglobal_distance"] = self.reglobal_distance
            d["anchor"] = self.anchor if self.anchor == "predicted" else "truth (diagnostic oracle)"
        return d


@dataclass
class StepResult:
    step: int
    query_id: str
    predicted: GeoPoint
    truth: Optional[GeoPoint]
    error_m: Optional[float]
    top_k: RankedList
    domain_size: int
    mode: str  # global | bootstrap | neighbor | fallback | reglobal
    center: Optional[GeoPoint] = None

    @property
    def fallback_used(self) -> bool:
        return self.mode in ("fallback", "reglobal")


@dataclass
class ReplayReport:
    strategy: Strategy
    k: int
    k_values: tuple[int, ...]
    s: float
    steps: list[StepResult] = field(default_factory=list)
    class_ids: dict[str, str] = field(default_factory=dict)

    def aggregates(self) -> dict:
        errs = [st.error_m for st in self.steps]
        agg: dict = {
            "steps": len(errs),
            "mean_error_m": fmean(errs) if errs else None,
            "median_error_m": median(errs) if errs else None,
            "max_error_m": max(errs) if errs else None,
            "fallback_steps": sum(st.fallback_used for st in self.steps),
            "sdm": {},
            "sdm_n": {},
            "recall": {},
        }
        for kk in self.k_values:
            vals = [sdm_k(st.top_k, st.truth, kk, self.s) for st in self.steps if len(st.top_k) >= kk]
            agg["sdm"][str(kk)] = fmean(vals) if vals else None
            agg["sdm_n"][str(kk)] = len(vals)
            labeled = [st for st in self.steps if st.query_id in self.class_ids]
            agg["recall"][str(kk)] = (
                fmean(recall_at_k(st.top_k, self.class_ids[st.query_id], kk) for st in labeled) if labeled else None
            )
        return agg


class Localizer:
    """Stateful per-flight localizer; one call to :meth:`step` per captured image.

    Steps must be fed in flight order. Not thread-safe; guard a shared
    instance externally.
    """

    def __init__(self, index: GeoIndex, strategy: Strategy = Strategy(), k: int = 10):
        if k < 1:
            raise ConfigError("k must be >= 1")
        self.index = index
        self.strategy = strategy
        self.k = k
        self.anchor: Optional[GeoPoint] = strategy.bootstrap if isinstance(strategy.bootstrap, GeoPoint) else None
        self.n_steps = 0

    def step(self, query_id: str, vector: np.ndarray, truth: Optional[GeoPoint] = None) -> StepResult:
        strategy, index, k = self.strategy, self.index, self.k
        if strategy.anchor == "truth" and truth is None:
            raise ConfigError("oracle anchoring needs the ground truth of every step")
        t = self.n_steps
        center = None
        if strategy.kind == "global":
            ranked, domain, mode = rank_global(index, vector, k, query_id), len(index), "global"
        elif self.anchor is None:
            ranked, domain, mode = rank_global(index, vector, k, query_id), len(index), "bootstrap"
        else:
            center = self.anchor
            try:
                ranked = rank_neighbor(index, vector, center, strategy.radius_m, k, query_id)
                domain, mode = ranked.strategy["domain_size"], "neighbor"
            except EmptyDomainError as exc:
                if strategy.on_empty == "fail":
                    raise ReplayStepError(t, query_id, exc) from exc
                log.info("step %d: empty neighborhood, falling back to global search", t)
                ranked, domain, mode = rank_global(index, vector, k, query_id), len(index), "fallback"
            if (
                mode == "neighbor"
                and strategy.reglobal_distance is not None
                and ranked.top().distance > strategy.reglobal_distance
            ):
                ranked, domain, mode = rank_global(index, vector, k, query_id), len(index), "reglobal"

        predicted = ranked.top().geo
        error = None if truth is None else meters_distance(predicted, truth)
        self.anchor = truth if strategy.anchor == "truth" else predicted
        self.n_steps += 1
        return StepResult(t, query_id, predicted, truth, error, ranked, domain, mode, center)


def replay(
    trace: Sequence[SampleRecord],
    queries: EmbeddingStore | Mapping[str, np.ndarray],
    index: GeoIndex,
    strategy: Strategy = Strategy(),
    k: int = 10,
    k_values: Optional[Sequence[int]] = None,
    s: float = DEFAULT_S,
) -> ReplayReport:
    """Process ``trace`` in order and record one ``StepResult`` per query.

    ``trace`` records carry the ground-truth position in ``geo``; their
    ``class_id`` feeds Recall@K. ``k_values`` defaults to those of 1, 3, 5
    not above ``k``.
    """
    if k_values is None:
        k_values = tuple(v for v in DEFAULT_K_VALUES if v <= k)
    if not trace:
        raise DataError("trace is empty")
    if k < 1 or any(kk < 1 or kk > k for kk in k_values):
        raise ConfigError(f"need 1 <= k_values <= k (k={k}, k_values={list(k_values)})")
    report = ReplayReport(strategy, k, tuple(k_values), s)
    loc = Localizer(index, strategy, k)
    for t, rec in enumerate(trace):
        qid = rec.sample_id
        if qid not in queries:
            raise DataError(f"missing embedding for query {qid!r} (step {t})")
        vec = queries.vector(qid) if isinstance(queries, EmbeddingStore) else np.asarray(queries[qid], dtype=np.float64)
        report.class_ids[qid] = rec.class_id
        report.steps.append(loc.step(qid, vec, rec.geo))
    return report


def _step_row(st: StepResult) -> str:
    top = ", ".join(
        f"[{_jsonl.dumps(e.sample_id)}, {format_distance(e.distance)}]" for e in st.top_k.entries
    )
    center = "null" if st.center is None else _jsonl.dumps(st.center.as_list())
    return (
        "{"
        f'"step": {st.step}, "query_id": {_jsonl.dumps(st.query_id)}, "mode": "{st.mode}", '
        f'"fallback_used": {"true" if st.fallback_used else "false"}, "center": {center}, '
        f'"domain_size": {st.domain_size}, "predicted": {_jsonl.dumps(st.predicted.as_list())}, '
        f'"truth": {_jsonl.dumps(st.truth.as_list())}, "error_m": {st.error_m!r}, "top_k": [{top}]'
        "}"
    )


def write_report(report: ReplayReport, path: str | Path, **extra) -> None:
    head = _jsonl.header(
        REPORT_FORMAT,
        strategy=report.strategy.describe(),
        k=report.k,
        k_values=list(report.k_values),
        s=report.s,
        **extra,
    )
    rows = [_step_row(st) for st in report.steps]
    rows.append(_jsonl.dumps({"aggregate": report.aggregates()}))
    _jsonl.write_lines(path, head, rows)


def trajectory_geojson(report: ReplayReport) -> dict:
    """FeatureCollection: truth and predicted paths plus per-step error points."""
    truth = [[st.truth.lon, st.truth.lat] for st in report.steps]
    pred = [[st.predicted.lon, st.predicted.lat] for st in report.steps]
    features = [
        {"type": "Feature", "properties": {"name": "truth"}, "geometry": {"type": "LineString", "coordinates": truth}},
        {"type": "Feature", "properties": {"name": "predicted"}, "geometry": {"type": "LineString", "coordinates": pred}},
    ]
    for st in report.steps:
        features.append(
            {
                "type": "Feature",
                "properties": {"step": st.step, "query_id": st.query_id, "error_m": st.error_m, "mode": st.mode,
                               "truth": [st.truth.lon, st.truth.lat]},
                "geometry": {"type": "Point", "coordinates": [st.predicted.lon, st.predicted.lat]},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_geojson(report: ReplayReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(trajectory_geojson(report), indent=1) + "\n", encoding="utf-8")


def within_radius(st: StepResult, radius_m: float) -> bool:
    return st.center is None or meters_distance(st.predicted, st.center) < radius_m or math.isinf(radius_m)
