"""HTTP localization service.

Holds one gallery index in memory and answers ranking requests, SDM
scoring, and stateful per-flight localization sessions (each session is a
:class:`~uavloc.replay.Localizer`, so neighbor search anchors on the
session's previous prediction).
"""

from __future__ import annotations

import threading
import uuid
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from . import __version__
from .errors import ConfigError, DataError
from .gallery import build_index
from .geo import GeoPoint, degree_distance
from .metrics import DEFAULT_S, sdm_from_distances
from .replay import Localizer, ReplayStepError, StepResult, Strategy
from .retrieval import EmptyDomainError, GeoIndex, RankedList, rank_global, rank_neighbor


class GeoPointModel(BaseModel):
    lat: float = Field(ge=-90, le=90)
    lon: float = Field(ge=-180, le=180)

    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)

    @classmethod
    def of(cls, p: GeoPoint | None) -> Optional["GeoPointModel"]:
        return None if p is None else cls(lat=p.lat, lon=p.lon)


class RankedEntryModel(BaseModel):
    rank: int
    sample_id: str
    distance: float
    lat: float
    lon: float
    class_id: str


class RankedListModel(BaseModel):
    query_id: str
    strategy: dict
    entries: list[RankedEntryModel]

    @classmethod
    def of(cls, rl: RankedList) -> "RankedListModel":
        return cls(
            query_id=rl.query_id,
            strategy=rl.strategy,
            entries=[
                RankedEntryModel(rank=i, sample_id=e.sample_id, distance=e.distance, lat=e.geo.lat, lon=e.geo.lon,
                                 class_id=e.class_id)
                for i, e in enumerate(rl.entries, start=1)
            ],
        )


class SearchRequest(BaseModel):
    query_id: str = ""
    vector: list[float]
    k: int = Field(default=10, ge=1)
    center: Optional[GeoPointModel] = None
    radius_m: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _neighbor_pair(self):
        if (self.center is None) != (self.radius_m is None):
            raise ValueError("center and radius_m must be given together")
        return self


class SdmRequest(BaseModel):
    truth: GeoPointModel
    candidates: list[GeoPointModel] = Field(min_length=1, description="rank-ordered candidate positions")
    k: Optional[int] = Field(default=None, ge=1)
    s: float = Field(default=DEFAULT_S, gt=0)


class SdmResponse(BaseModel):
    sdm: float
    k: int
    s: float
    distances_deg: list[float]


class IndexInfo(BaseModel):
    loaded: bool
    entries: int = 0
    dimension: int = 0


class LoadIndexRequest(BaseModel):
    store_path: str
    manifest_path: str
    gallery_view: Literal["satellite", "drone", "any"] = "satellite"
    normalize: bool = False


class SessionCreate(BaseModel):
    kind: Literal["global", "neighbor"] = "global"
    radius_m: Optional[float] = Field(default=None, gt=0)
    bootstrap: Optional[GeoPointModel] = None
    on_empty: Literal["fallback_global", "fail"] = "fallback_global"
    reglobal_distance: Optional[float] = Field(default=None, gt=0)
    k: int = Field(default=10, ge=1)


class SessionInfo(BaseModel):
    session_id: str
    strategy: dict
    k: int
    steps: int
    anchor: Optional[GeoPointModel] = None


class StepRequest(BaseModel):
    query_id: str
    vector: list[float]
    truth: Optional[GeoPointModel] = None


class StepResponse(BaseModel):
    step: int
    query_id: str
    mode: str
    fallback_used: bool
    center: Optional[GeoPointModel]
    domain_size: int
    predicted: GeoPointModel
    error_m: Optional[float]
    top_k: RankedListModel

    @classmethod
    def of(cls, st: StepResult) -> "StepResponse":
        return cls(
            step=st.step,
            query_id=st.query_id,
            mode=st.mode,
            fallback_used=st.fallback_used,
            center=GeoPointModel.of(st.center),
            domain_size=st.domain_size,
            predicted=GeoPointModel.of(st.predicted),
            error_m=st.error_m,
            top_k=RankedListModel.of(st.top_k),
        )


class _Session:
    def __init__(self, localizer: Localizer):
        self.localizer = localizer
        self.lock = threading.Lock()


def create_app(index: GeoIndex | None = None) -> FastAPI:
    app = FastAPI(title="uavloc", version=__version__)
    state: dict = {"index": index}
    sessions: dict[str, _Session] = {}
    sessions_lock = threading.Lock()

    def current_index() -> GeoIndex:
        if state["index"] is None:
            raise HTTPException(status_code=503, detail="no gallery index loaded")
        return state["index"]

    def query_vector(vector: list[float], idx: GeoIndex) -> np.ndarray:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (idx.dimension,):
            raise HTTPException(status_code=422, detail=f"vector length {vec.shape[0]} != index dimension {idx.dimension}")
        if not np.all(np.isfinite(vec)):
            raise HTTPException(status_code=422, detail="vector has non-finite entries")
        return vec

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/index", response_model=IndexInfo)
    def index_info() -> IndexInfo:
        idx = state["index"]
        if idx is None:
            return IndexInfo(loaded=False)
        return IndexInfo(loaded=True, entries=len(idx), dimension=idx.dimension)

    @app.post("/index", response_model=IndexInfo)
    def load_index(req: LoadIndexRequest) -> IndexInfo:
        try:
            idx = build_index(req.store_path, req.manifest_path, req.gallery_view, req.normalize)
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        state["index"] = idx
        with sessions_lock:
            sessions.clear()
        return IndexInfo(loaded=True, entries=len(idx), dimension=idx.dimension)

    @app.post("/search", response_model=RankedListModel)
    def search(req: SearchRequest) -> RankedListModel:
        idx = current_index()
        vec = query_vector(req.vector, idx)
        try:
            if req.center is None:
                rl = rank_global(idx, vec, req.k, req.query_id)
            else:
                rl = rank_neighbor(idx, vec, req.center.point(), req.radius_m, req.k, req.query_id)
        except EmptyDomainError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return RankedListModel.of(rl)

    @app.post("/sdm", response_model=SdmResponse)
    def sdm(req: SdmRequest) -> SdmResponse:
        k = req.k or len(req.candidates)
        if k > len(req.candidates):
            raise HTTPException(status_code=422, detail=f"SDM_{k} needs {k} candidates, got {len(req.candidates)}")
        truth = req.truth.point()
        d = [degree_distance(truth, c.point()) for c in req.candidates[:k]]
        return SdmResponse(sdm=sdm_from_distances(d, req.s), k=k, s=req.s, distances_deg=d)

    def session_info(sid: str, sess: _Session) -> SessionInfo:
        loc = sess.localizer
        return SessionInfo(session_id=sid, strategy=loc.strategy.describe(), k=loc.k, steps=loc.n_steps,
                           anchor=GeoPointModel.of(loc.anchor))

    def get_session(sid: str) -> _Session:
        with sessions_lock:
            sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        return sess

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(req: SessionCreate) -> SessionInfo:
        idx = current_index()
        try:
            strategy = Strategy(
                req.kind,
                radius_m=req.radius_m,
                bootstrap=req.bootstrap.point() if req.bootstrap else "global",
                on_empty=req.on_empty,
                reglobal_distance=req.reglobal_distance,
            )
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        sid = uuid.uuid4().hex
        sess = _Session(Localizer(idx, strategy, req.k))
        with sessions_lock:
            sessions[sid] = sess
        return session_info(sid, sess)

    @app.get("/sessions/{sid}", response_model=SessionInfo)
    def read_session(sid: str) -> SessionInfo:
        return session_info(sid, get_session(sid))

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str) -> None:
        with sessions_lock:
            if sessions.pop(sid, None) is None:
                raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")

    @app.post("/sessions/{sid}/steps", response_model=StepResponse)
    def step(sid: str, req: StepRequest) -> StepResponse:
        sess = get_session(sid)
        vec = query_vector(req.vector, sess.localizer.index)
        with sess.lock:
            try:
                st = sess.localizer.step(req.query_id, vec, req.truth.point() if req.truth else None)
            except ReplayStepError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from None
        return StepResponse.of(st)

    return app
