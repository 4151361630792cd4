"""Sample manifests: drone/satellite records grouped into classes and splits."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import _jsonl
from .errors import DataError
from .geo import GeoPoint, meters_distance

MANIFEST_FORMAT = "uavloc/manifest"
SPLITS = ("train", "query", "gallery")
VIEWS = ("drone", "satellite")
DEFAULT_GEO_TOL_M = 1.0


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    class_id: str
    view: str
    geo: GeoPoint
    altitude_m: Optional[float] = None
    image_path: str = ""
    # Only set for trace manifests; defines replay order.
    step: Optional[int] = None

    def to_row(self, split: str) -> dict:
        row = {
            "split": split,
            "sample_id": self.sample_id,
            "class_id": self.class_id,
            "view": self.view,
            "lat": self.geo.lat,
            "lon": self.geo.lon,
            "altitude_m": self.altitude_m,
            "image_path": self.image_path,
        }
        if self.step is not None:
            row["step"] = self.step
        return row


@dataclass
class SplitManifest:
    split: str
    records: list[SampleRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def classes(self) -> list[str]:
        """Class ids in order of first appearance."""
        return list(dict.fromkeys(r.class_id for r in self.records))

    def by_view(self, view: str) -> "SplitManifest":
        return SplitManifest(self.split, [r for r in self.records if r.view == view])


def class_counts(manifest: SplitManifest) -> dict[str, int]:
    return dict(Counter(r.class_id for r in manifest.records))


def _mean_geo(points: list[GeoPoint]) -> GeoPoint:
    # Offsets from the first member keep identical members exact.
    ref = points[0]
    n = len(points)
    return GeoPoint(
        ref.lat + math.fsum(p.lat - ref.lat for p in points) / n,
        ref.lon + math.fsum(p.lon - ref.lon for p in points) / n,
    )


def class_geo(manifest: SplitManifest, class_id: str) -> GeoPoint:
    """Mean position of the members of ``class_id``."""
    members = [r.geo for r in manifest.records if r.class_id == class_id]
    if not members:
        raise DataError(f"unknown class {class_id!r}")
    return _mean_geo(members)


def class_geos(manifest: SplitManifest) -> dict[str, GeoPoint]:
    groups: dict[str, list[GeoPoint]] = {}
    for r in manifest.records:
        groups.setdefault(r.class_id, []).append(r.geo)
    return {c: _mean_geo(ps) for c, ps in groups.items()}


def validate_manifest(manifest: SplitManifest, geo_tol_m: float = DEFAULT_GEO_TOL_M, path: str = "<manifest>",
                      first_line: int = 2) -> None:
    """Check id uniqueness and intra-class geo agreement.

    Trace records (those with a ``step``) are labeled with the nearest
    gallery class, so they are exempt from the spread check. Error messages carry the file line of the offending record, assuming
    records start at ``first_line``.
    """
    if manifest.split not in SPLITS:
        raise DataError(f"{path}: unknown split {manifest.split!r}")
    seen: dict[str, int] = {}
    anchors: dict[str, GeoPoint] = {}
    for i, r in enumerate(manifest.records):
        lineno = first_line + i
        if r.sample_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate sample_id {r.sample_id!r} (first at line {seen[r.sample_id]})")
        seen[r.sample_id] = lineno
        if not r.class_id:
            raise DataError(f"{path}:{lineno}: empty class_id")
        if r.view not in VIEWS:
            raise DataError(f"{path}:{lineno}: unknown view {r.view!r}")
        if r.step is not None:
            continue
        anchor = anchors.setdefault(r.class_id, r.geo)
        spread = meters_distance(anchor, r.geo)
        if spread > geo_tol_m:
            raise DataError(
                f"{path}:{lineno}: class {r.class_id!r} member {r.sample_id!r} is {spread:.3f} m "
                f"from the class's first member (tolerance {geo_tol_m} m)"
            )


def load_manifest(path: str | Path, geo_tol_m: float = DEFAULT_GEO_TOL_M) -> SplitManifest:
    head, rows = _jsonl.read_lines(path, MANIFEST_FORMAT)
    split = head.get("config", {}).get("split")
    if split not in SPLITS:
        raise DataError(f"{path}:1: header split must be one of {SPLITS}, got {split!r}")
    records = []
    for lineno, row in rows:
        if row.get("split") != split:
            raise DataError(f"{path}:{lineno}: record split {row.get('split')!r} differs from header {split!r}")
        try:
            alt = row["altitude_m"]
            step = row.get("step")
            rec = SampleRecord(
                sample_id=_str(row["sample_id"]),
                class_id=_str(row["class_id"]),
                view=_str(row["view"]),
                geo=GeoPoint(float(row["lat"]), float(row["lon"])),
                altitude_m=None if alt is None else float(alt),
                image_path=_str(row["image_path"]),
                step=None if step is None else int(step),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        records.append(rec)
    manifest = SplitManifest(split, records)
    validate_manifest(manifest, geo_tol_m, str(path))
    return manifest


def save_manifest(manifest: SplitManifest, path: str | Path) -> None:
    rows = [_jsonl.dumps(r.to_row(manifest.split)) for r in manifest.records]
    _jsonl.write_lines(path, _jsonl.header(MANIFEST_FORMAT, split=manifest.split), rows)


def trace_order(manifest: SplitManifest) -> list[SampleRecord]:
    """Records sorted by their explicit ``step`` column."""
    missing = [r.sample_id for r in manifest.records if r.step is None]
    if missing:
        raise DataError(f"trace records without a step: {missing[:5]}")
    steps = [r.step for r in manifest.records]
    if len(set(steps)) != len(steps):
        raise DataError("trace contains duplicate step numbers")
    return sorted(manifest.records, key=lambda r: r.step)


def load_trace(path: str | Path) -> list[SampleRecord]:
    """Load a trace manifest in step order.

    A trace's ``class_id`` labels the gallery class used for Recall@K (for a
    tile gallery, the nearest tile), so queries sharing a label need not be
    co-located.
    """
    return trace_order(load_manifest(path))


def _str(v) -> str:
    if not isinstance(v, str):
        raise TypeError(f"expected a string, got {v!r}")
    return v
