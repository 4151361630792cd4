from collections import defaultdict

import pytest
from hypothesis import given, settings, strategies as st

from uavloc.dataset import (
    SampleRecord,
    SplitManifest,
    class_counts,
    class_geo,
    load_manifest,
    load_trace,
    save_manifest,
)
from uavloc.errors import DataError
from uavloc.geo import GeoPoint


def dense_gallery(n_classes: int) -> SplitManifest:
    recs = []
    for c in range(n_classes):
        geo = GeoPoint(30.0 + (c // 60) * 1.8e-4, 120.0 + (c % 60) * 2.1e-4)  # ~20 m spacing
        for alt in (80.0, 90.0, 100.0):
            recs.append(SampleRecord(f"{c:05d}_{int(alt)}", f"{c:05d}", "satellite", geo, alt, f"s/{c:05d}_{int(alt)}.png"))
    return SplitManifest("gallery", recs)


def test_dense_gallery_shape(tmp_path):
    save_manifest(dense_gallery(3033), tmp_path / "g.jsonl")
    m = load_manifest(tmp_path / "g.jsonl")
    counts = class_counts(m)
    assert len(m) == 9099
    assert len(counts) == 3033
    assert set(counts.values()) == {3}


def test_empty_manifest(tmp_path):
    save_manifest(SplitManifest("query", []), tmp_path / "e.jsonl")
    assert len(load_manifest(tmp_path / "e.jsonl")) == 0


def test_duplicate_id(tmp_path):
    r = SampleRecord("dup", "c1", "drone", GeoPoint(30, 120))
    save_manifest(SplitManifest("query", [r, r]), tmp_path / "d.jsonl")
    with pytest.raises(DataError, match=r"d.jsonl:3: duplicate sample_id 'dup'"):
        load_manifest(tmp_path / "d.jsonl")


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "p.jsonl"
    save_manifest(dense_gallery(2), p)
    lines = p.read_text().splitlines()
    lines[3] = lines[3][:-5]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r":4: parse error"):
        load_manifest(p)


def test_invalid_geo_has_line(tmp_path):
    p = tmp_path / "g.jsonl"
    save_manifest(dense_gallery(1), p)
    p.write_text(p.read_text().replace('"lat": 30.0', '"lat": 95.0', 1))
    with pytest.raises(DataError, match=r":2: latitude 95.0"):
        load_manifest(p)


def test_intra_class_spread(tmp_path):
    recs = [
        SampleRecord("a", "c", "drone", GeoPoint(30.0, 120.0)),
        SampleRecord("b", "c", "drone", GeoPoint(30.00005, 120.0)),  # ~5.6 m away
    ]
    save_manifest(SplitManifest("query", recs), tmp_path / "s.jsonl")
    with pytest.raises(DataError, match=r":3: class 'c'"):
        load_manifest(tmp_path / "s.jsonl")
    assert len(load_manifest(tmp_path / "s.jsonl", geo_tol_m=10.0)) == 2


def test_class_geo():
    one = SplitManifest("gallery", [SampleRecord("a", "c", "satellite", GeoPoint(30.0, 120.0))])
    assert class_geo(one, "c") == GeoPoint(30.0, 120.0)
    same = SplitManifest("gallery", [SampleRecord(str(i), "c", "satellite", GeoPoint(30.1, 120.2)) for i in range(3)])
    assert class_geo(same, "c") == GeoPoint(30.1, 120.2)
    spread = SplitManifest(
        "gallery", [SampleRecord(str(i), "c", "drone", GeoPoint(lat, 120.0)) for i, lat in enumerate((30.0, 30.00001, 30.00002))]
    )
    assert class_geo(spread, "c").lat == pytest.approx(30.00001, abs=1e-12)
    with pytest.raises(DataError):
        class_geo(spread, "nope")


ids = st.text(st.characters(min_codepoint=33, max_codepoint=0x2FFF, blacklist_categories=("Cs",)), min_size=1, max_size=12)


@st.composite
def manifests(draw):
    n = draw(st.integers(0, 12))
    sample_ids = draw(st.lists(ids, min_size=n, max_size=n, unique=True))
    recs = []
    for i, sid in enumerate(sample_ids):
        recs.append(
            SampleRecord(
                sid,
                draw(ids),
                draw(st.sampled_from(["drone", "satellite"])),
                GeoPoint(draw(st.floats(-90, 90)), draw(st.floats(-180, 180))),
                draw(st.none() | st.floats(0, 500)),
                draw(st.text(max_size=20)),
                draw(st.none() | st.just(i)),
            )
        )
    return SplitManifest(draw(st.sampled_from(["train", "query", "gallery"])), recs)


@settings(max_examples=60, deadline=None)
@given(manifests())
def test_save_load_save_byte_identity(tmp_path_factory, m):
    d = tmp_path_factory.mktemp("rt")
    save_manifest(m, d / "a.jsonl")
    back = load_manifest(d / "a.jsonl", geo_tol_m=float("inf"))
    assert back == m
    save_manifest(back, d / "b.jsonl")
    assert (d / "a.jsonl").read_bytes() == (d / "b.jsonl").read_bytes()


def test_class_counts_vs_bruteforce(rng):
    recs = [SampleRecord(f"s{i}", f"c{rng.integers(0, 7)}", "drone", GeoPoint(0, 0)) for i in range(100)]
    brute = defaultdict(int)
    for r in recs:
        brute[r.class_id] += 1
    assert class_counts(SplitManifest("train", recs)) == dict(brute)


def test_trace_order(tmp_path):
    recs = [SampleRecord(f"q{i}", f"t{i % 2}", "drone", GeoPoint(30, 120 + i * 1e-3), None, "", step) for i, step in
            enumerate([2, 0, 1])]
    save_manifest(SplitManifest("query", recs), tmp_path / "t.jsonl")
    assert [r.sample_id for r in load_trace(tmp_path / "t.jsonl")] == ["q1", "q2", "q0"]
    # nearest-tile labels put q0 and q2 (about 190 m apart) in one class; traces allow that
    assert len(load_manifest(tmp_path / "t.jsonl")) == 3


def test_split_mismatch(tmp_path):
    p = tmp_path / "m.jsonl"
    save_manifest(dense_gallery(1), p)
    p.write_text(p.read_text().replace('"split": "gallery", "sample_id"', '"split": "query", "sample_id"', 1))
    with pytest.raises(DataError, match="differs from header"):
        load_manifest(p)
