import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gift.annotation import (
    N_TACTICS,
    Gaze,
    Role,
    TacticLabel,
    all_tactics,
    dataset_stats,
    derive_velocities,
    parse_clip,
    serialize_clip,
    tactic_index,
    validate_clip,
)
from gift.annotation import Passing, PnR, Shot
from gift.errors import ClipSyntaxError, InvariantError, SchemaError

from conftest import make_clip


def test_fixture_parses(fixture_bytes):
    c = parse_clip(fixture_bytes)
    assert c.T == 2
    assert c.occurrence_frame == 2
    assert validate_clip(c).ok
    assert c.frames[1].player(1).role is Role.LAYING_UP
    assert c.frames[0].player(1).velocity is None


def test_missing_player_is_schema_error(fixture_doc):
    fixture_doc["frames"][0]["players"] = [p for p in fixture_doc["frames"][0]["players"] if p["player_id"] != 7]
    with pytest.raises(SchemaError):
        parse_clip(json.dumps(fixture_doc))


def test_pose_arity(fixture_doc):
    fixture_doc["frames"][1]["players"][4]["pose"] = list(range(33))
    with pytest.raises(SchemaError, match="pose"):
        parse_clip(json.dumps(fixture_doc))


def test_duplicate_player_is_invariant_error(fixture_doc):
    fixture_doc["frames"][0]["players"][9]["player_id"] = 2
    with pytest.raises(InvariantError):
        parse_clip(json.dumps(fixture_doc))


def test_malformed_json():
    with pytest.raises(ClipSyntaxError):
        parse_clip(b'{"clip_id": ')


def test_strict_mode_unknown_field(fixture_doc):
    fixture_doc["frames"][0]["players"][0]["jersey"] = 23
    with pytest.raises(SchemaError, match="unknown"):
        parse_clip(json.dumps(fixture_doc))
    assert parse_clip(json.dumps(fixture_doc), strict=False).T == 2


def test_serialize_deterministic_and_round_trip(clip):
    a = serialize_clip(clip)
    assert a == serialize_clip(clip)
    assert parse_clip(a) == clip
    assert serialize_clip(parse_clip(a)) == a


def test_velocity_omitted_when_absent(clip):
    doc = json.loads(serialize_clip(clip))
    assert all("velocity" not in p for f in doc["frames"] for p in f["players"])
    doc = json.loads(serialize_clip(derive_velocities(clip)))
    assert all("velocity" in p for f in doc["frames"] for p in f["players"])


def test_velocity_example():
    c = make_clip(T=3, occurrence=3)  # bbox x advances 5 px per frame
    v = derive_velocities(c)
    assert v.frames[1].player(1).velocity.vx == pytest.approx(125.0)
    assert v.frames[1].player(1).velocity.vy == 0.0
    assert all((p.velocity.vx, p.velocity.vy) == (0.0, 0.0) for p in v.frames[0].players)


def test_velocity_stationary():
    c = make_clip(T=4, occurrence=4)
    frames = []
    for f in c.frames:
        ps = tuple(dataclasses.replace(p, bbox=c.frames[0].player(p.player_id).bbox) for p in f.players)
        frames.append(dataclasses.replace(f, players=ps))
    v = derive_velocities(dataclasses.replace(c, frames=tuple(frames)))
    assert {(p.velocity.vx, p.velocity.vy) for f in v.frames for p in f.players} == {(0.0, 0.0)}


def test_derive_velocities_idempotent(clip):
    once = derive_velocities(clip)
    assert derive_velocities(once) == once


def test_derive_keeps_other_fields(clip):
    v = derive_velocities(clip)
    for f0, f1 in zip(clip.frames, v.frames):
        for p0, p1 in zip(sorted(f0.players, key=lambda p: p.player_id), f1.players):
            assert dataclasses.replace(p1, velocity=None) == p0


def test_validate_gaze_range(clip):
    f = clip.frames[2]
    bad = dataclasses.replace(f.players[4], gaze=Gaze(0.0, 7.0))
    frames = list(clip.frames)
    frames[2] = dataclasses.replace(f, players=f.players[:4] + (bad,) + f.players[5:])
    report = validate_clip(dataclasses.replace(clip, frames=tuple(frames)))
    assert len(report.findings) == 1
    finding = report.findings[0]
    assert (finding.rule, finding.frame_id, finding.player_id) == ("gaze_range", 3, 5)


def test_validate_occurrence_bound(clip):
    report = validate_clip(dataclasses.replace(clip, occurrence_frame=clip.T + 3))
    assert [f.rule for f in report.findings] == ["occurrence_bound"]


def test_validate_occurrence_needs_shot_role(clip):
    report = validate_clip(dataclasses.replace(clip, occurrence_frame=2))
    assert [f.rule for f in report.findings] == ["occurrence_role"]


def test_report_serializes(clip):
    doc = validate_clip(clip).to_dict()
    assert doc == {"clip_id": "fixture", "ok": True, "findings": []}


def test_tactic_index_corners():
    assert tactic_index(TacticLabel(Passing.NoPass, PnR.NoPnR, False, Shot.Shoot)) == 0
    assert tactic_index(TacticLabel(Passing.MultiPass, PnR.MultiPnR, True, Shot.Dunk)) == 53


def test_tactic_index_bijective():
    labels = all_tactics()
    assert N_TACTICS == 54
    assert sorted(tactic_index(t) for t in labels) == list(range(54))
    assert len(set(labels)) == 54
    for i in range(54):
        assert tactic_index(TacticLabel.from_index(i)) == i


def test_stats_single_clip():
    s = dataset_stats([make_clip(T=50, occurrence=30)])
    assert s.annotations["bbox"] == 500
    assert s.annotations["velocity"] == 0
    assert s.n_frames == 50 and s.n_clips == 1
    assert s.duration_s == pytest.approx(2.0)
    assert sum(s.roles.values()) == 500


def test_stats_empty():
    s = dataset_stats([])
    assert (s.n_clips, s.n_frames, s.duration_s) == (0, 0, 0.0)
    assert not s.annotations and not s.roles


def test_stats_additive():
    a = [make_clip(T=4, occurrence=3, clip_id="a"), make_clip(T=7, occurrence=5, clip_id="b")]
    b = [derive_velocities(make_clip(T=5, occurrence=2, clip_id="c"))]
    assert dataset_stats(a + b).to_dict() == (dataset_stats(a) + dataset_stats(b)).to_dict()


def test_full_corpus_scale():
    # stats scale linearly: 214K frames of 10 players give about 2.1M boxes
    one = dataset_stats([make_clip(T=50, occurrence=30)])
    per_frame = one.annotations["bbox"] / one.n_frames
    assert round(214_000 * per_frame / 1e6, 1) == 2.1


@settings(max_examples=30, deadline=None)
@given(T=st.integers(2, 6), occ_offset=st.integers(0, 5), fps=st.floats(1.0, 60.0))
def test_round_trip_property(T, occ_offset, fps):
    occ = 1 + occ_offset % T
    c = dataclasses.replace(make_clip(T=T, occurrence=occ), fps=fps)
    c = derive_velocities(c)
    assert parse_clip(serialize_clip(c)) == c
