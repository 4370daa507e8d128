"""Basketball clip annotation schema: types, JSON I/O, validation, velocities and stats.

One clip is one JSON document::

    {"clip_id": "...", "view": 2, "fps": 25.0, "occurrence_frame": 31,
     "tactic": {"passing": "OnePass", "pnr": "NoPnR", "drive": true, "shot": "Layup"},
     "frames": [{"frame_id": 1, "players": [
         {"player_id": 1, "bbox": [x, y, h, w], "pose": [34 floats],
          "gaze": [pitch, yaw], "headpose": [pitch, yaw, roll],
          "velocity": [vx, vy], "role": "holding"}, ...]}, ...]}

Angles are radians, coordinates are raw image pixels with a top-left bbox
anchor, velocities are pixels per second. ``velocity`` may be absent until
:func:`derive_velocities` has run.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import ClipSyntaxError, InvariantError, SchemaError

N_PLAYERS = 10
OFFENSE = range(1, 6)
DEFENSE = range(6, 11)
N_KEYPOINTS = 17
N_VIEWS = 5
DEFAULT_FPS = 25.0
FORMAT_VERSION = "1.0"


class Role(str, enum.Enum):
    STANDING = "standing"
    RUNNING = "running"
    DEFENDING = "defending"
    HOLDING = "holding"
    SHOOTING = "shooting"
    LAYING_UP = "laying-up"
    DUNKING = "dunking"


SHOT_ROLES = frozenset({Role.SHOOTING, Role.LAYING_UP, Role.DUNKING})


class Passing(enum.IntEnum):
    NoPass = 0
    OnePass = 1
    MultiPass = 2


class PnR(enum.IntEnum):
    NoPnR = 0
    OnePnR = 1
    MultiPnR = 2


class Shot(enum.IntEnum):
    Shoot = 0
    Layup = 1
    Dunk = 2


SHOT_ROLE_FOR = {Shot.Shoot: Role.SHOOTING, Shot.Layup: Role.LAYING_UP, Shot.Dunk: Role.DUNKING}

N_TACTICS = len(Passing) * len(PnR) * 2 * len(Shot)


@dataclass(frozen=True)
class TacticLabel:
    passing: Passing
    pnr: PnR
    drive: bool
    shot: Shot

    @property
    def index(self) -> int:
        return tactic_index(self)

    @classmethod
    def from_index(cls, idx: int) -> "TacticLabel":
        if not 0 <= idx < N_TACTICS:
            raise ValueError(f"tactic index {idx} outside [0, {N_TACTICS})")
        idx, shot = divmod(idx, 3)
        idx, drive = divmod(idx, 2)
        passing, pnr = divmod(idx, 3)
        return cls(Passing(passing), PnR(pnr), bool(drive), Shot(shot))


def tactic_index(t: TacticLabel) -> int:
    """Mixed-radix index of a tactic label in ``[0, 54)``."""
    return ((int(t.passing) * 3 + int(t.pnr)) * 2 + int(t.drive)) * 3 + int(t.shot)


def all_tactics() -> list[TacticLabel]:
    return [TacticLabel.from_index(i) for i in range(N_TACTICS)]


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    h: float
    w: float


@dataclass(frozen=True)
class Gaze:
    pitch: float
    yaw: float


@dataclass(frozen=True)
class HeadPose:
    pitch: float
    yaw: float
    roll: float


@dataclass(frozen=True)
class Velocity:
    vx: float
    vy: float


@dataclass(frozen=True)
class PlayerFrameAnnotation:
    player_id: int
    bbox: BBox
    pose: tuple  # 34 floats, COCO keypoint order, (x, y) interleaved
    gaze: Gaze
    headpose: HeadPose
    role: Role
    velocity: Optional[Velocity] = None

    @property
    def is_offense(self) -> bool:
        return self.player_id in OFFENSE


@dataclass(frozen=True)
class FrameAnnotation:
    frame_id: int
    players: tuple

    def player(self, player_id: int) -> PlayerFrameAnnotation:
        for p in self.players:
            if p.player_id == player_id:
                return p
        raise KeyError(player_id)


@dataclass(frozen=True)
class ClipAnnotation:
    clip_id: str
    view: int
    tactic: TacticLabel
    occurrence_frame: int
    frames: tuple
    fps: float = DEFAULT_FPS

    @property
    def T(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return self.T / self.fps


# ---------------------------------------------------------------- JSON codec


def _floats(values, name: str, arity: int) -> tuple:
    if not isinstance(values, list) or len(values) != arity:
        got = len(values) if isinstance(values, list) else type(values).__name__
        raise SchemaError(f"{name}: expected {arity} numbers, got {got}")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{name}: non-numeric entry {v!r}")
        out.append(float(v))
    return tuple(out)


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{name}: expected an integer, got {value!r}")
    return value


def _check_keys(obj: dict, allowed: set, where: str, strict: bool):
    if strict:
        extra = set(obj) - allowed
        if extra:
            raise SchemaError(f"{where}: unknown field(s) {sorted(extra)}")


_PLAYER_KEYS = {"player_id", "bbox", "pose", "gaze", "headpose", "velocity", "role"}
_FRAME_KEYS = {"frame_id", "players"}
_CLIP_KEYS = {"clip_id", "view", "tactic", "fps", "occurrence_frame", "frames"}
_TACTIC_KEYS = {"passing", "pnr", "drive", "shot"}


def _parse_player(obj, where: str, strict: bool) -> PlayerFrameAnnotation:
    pid = _int(_require(obj, "player_id", where), f"{where}.player_id")
    where = f"{where}[player {pid}]"
    _check_keys(obj, _PLAYER_KEYS, where, strict)
    role_name = _require(obj, "role", where)
    try:
        role = Role(role_name)
    except ValueError:
        raise SchemaError(f"{where}: unknown role {role_name!r}") from None
    velocity = None
    if obj.get("velocity") is not None:
        velocity = Velocity(*_floats(obj["velocity"], f"{where}.velocity", 2))
    return PlayerFrameAnnotation(
        player_id=pid,
        bbox=BBox(*_floats(_require(obj, "bbox", where), f"{where}.bbox", 4)),
        pose=_floats(_require(obj, "pose", where), f"{where}.pose", 2 * N_KEYPOINTS),
        gaze=Gaze(*_floats(_require(obj, "gaze", where), f"{where}.gaze", 2)),
        headpose=HeadPose(*_floats(_require(obj, "headpose", where), f"{where}.headpose", 3)),
        role=role,
        velocity=velocity,
    )


def _parse_tactic(obj, strict: bool) -> TacticLabel:
    _check_keys(obj, _TACTIC_KEYS, "tactic", strict)
    try:
        drive = _require(obj, "drive", "tactic")
        if not isinstance(drive, bool):
            raise SchemaError("tactic.drive: expected a boolean")
        return TacticLabel(
            passing=Passing[_require(obj, "passing", "tactic")],
            pnr=PnR[_require(obj, "pnr", "tactic")],
            drive=drive,
            shot=Shot[_require(obj, "shot", "tactic")],
        )
    except KeyError as exc:
        raise SchemaError(f"tactic: unknown category {exc.args[0]!r}") from None


def clip_from_dict(doc: dict, strict: bool = True) -> ClipAnnotation:
    """Build a clip from decoded JSON, raising on schema and invariant errors."""
    if not isinstance(doc, dict):
        raise SchemaError("clip document must be a JSON object")
    _check_keys(doc, _CLIP_KEYS, "clip", strict)
    clip_id = _require(doc, "clip_id", "clip")
    if not isinstance(clip_id, str):
        raise SchemaError("clip.clip_id: expected a string")
    fps = _require(doc, "fps", "clip")
    if isinstance(fps, bool) or not isinstance(fps, (int, float)):
        raise SchemaError("clip.fps: expected a number")
    frames_doc = _require(doc, "frames", "clip")
    if not isinstance(frames_doc, list):
        raise SchemaError("clip.frames: expected a list")
    frames = []
    for k, fdoc in enumerate(frames_doc):
        where = f"frames[{k}]"
        fid = _int(_require(fdoc, "frame_id", where), f"{where}.frame_id")
        _check_keys(fdoc, _FRAME_KEYS, where, strict)
        players_doc = _require(fdoc, "players", where)
        if not isinstance(players_doc, list) or len(players_doc) != N_PLAYERS:
            n = len(players_doc) if isinstance(players_doc, list) else "?"
            raise SchemaError(f"frame {fid}: expected {N_PLAYERS} players, got {n}")
        players = tuple(_parse_player(p, f"frame {fid}", strict) for p in players_doc)
        frames.append(FrameAnnotation(frame_id=fid, players=players))
    clip = ClipAnnotation(
        clip_id=clip_id,
        view=_int(_require(doc, "view", "clip"), "clip.view"),
        tactic=_parse_tactic(_require(doc, "tactic", "clip"), strict),
        occurrence_frame=_int(_require(doc, "occurrence_frame", "clip"), "clip.occurrence_frame"),
        frames=tuple(frames),
        fps=float(fps),
    )
    report = validate_clip(clip)
    if report.findings:
        raise InvariantError("; ".join(str(f) for f in report.findings[:5]))
    return clip


def parse_clip(data: bytes | str, strict: bool = True) -> ClipAnnotation:
    """Parse one clip JSON document.

    With ``strict`` unknown fields raise :class:`SchemaError`; otherwise they
    are ignored.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ClipSyntaxError(str(exc)) from None
    return clip_from_dict(doc, strict=strict)


def _player_dict(p: PlayerFrameAnnotation) -> dict:
    b = p.bbox
    out = {
        "player_id": p.player_id,
        "bbox": [b.x, b.y, b.h, b.w],
        "pose": list(p.pose),
        "gaze": [p.gaze.pitch, p.gaze.yaw],
        "headpose": [p.headpose.pitch, p.headpose.yaw, p.headpose.roll],
        "role": p.role.value,
    }
    if p.velocity is not None:
        out["velocity"] = [p.velocity.vx, p.velocity.vy]
    return out


def clip_to_dict(c: ClipAnnotation) -> dict:
    t = c.tactic
    return {
        "clip_id": c.clip_id,
        "view": c.view,
        "fps": float(c.fps),
        "occurrence_frame": c.occurrence_frame,
        "tactic": {"passing": t.passing.name, "pnr": t.pnr.name, "drive": t.drive, "shot": t.shot.name},
        "frames": [
            {"frame_id": f.frame_id, "players": [_player_dict(p) for p in f.players]}
            for f in c.frames
        ],
    }


def serialize_clip(c: ClipAnnotation) -> bytes:
    # Floats go through repr (shortest round-trip form), so output is both
    # deterministic and lossless.
    return (json.dumps(clip_to_dict(c), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode()


# ---------------------------------------------------------------- velocities


def derive_velocities(c: ClipAnnotation) -> ClipAnnotation:
    """Return ``c`` with bbox-anchor velocities (px/s) filled in for every player.

    Frame 1 gets ``(0, 0)``; frame k uses the displacement from frame k-1
    divided by ``1 / fps``.
    """
    dt = 1.0 / c.fps
    frames = []
    prev = None
    for f in c.frames:
        players = []
        for p in sorted(f.players, key=lambda p: p.player_id):
            if prev is None:
                v = Velocity(0.0, 0.0)
            else:
                q = prev[p.player_id].bbox
                v = Velocity((p.bbox.x - q.x) / dt, (p.bbox.y - q.y) / dt)
            players.append(dataclasses.replace(p, velocity=v))
        prev = {p.player_id: p for p in f.players}
        frames.append(dataclasses.replace(f, players=tuple(players)))
    return dataclasses.replace(c, frames=tuple(frames))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Finding:
    rule: str
    message: str
    frame_id: Optional[int] = None
    player_id: Optional[int] = None

    def __str__(self):
        loc = []
        if self.frame_id is not None:
            loc.append(f"frame {self.frame_id}")
        if self.player_id is not None:
            loc.append(f"player {self.player_id}")
        where = f" ({', '.join(loc)})" if loc else ""
        return f"{self.rule}{where}: {self.message}"


@dataclass
class ValidationReport:
    clip_id: str
    findings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "ok": self.ok, "findings": [dataclasses.asdict(f) for f in self.findings]}


def _finite(*values) -> bool:
    return all(math.isfinite(v) for v in values)


def _check_player(p, fid, out: list):
    def bad(rule, msg):
        out.append(Finding(rule, msg, fid, p.player_id))

    b = p.bbox
    if not _finite(b.x, b.y, b.h, b.w):
        bad("bbox_finite", "bbox has non-finite values")
    elif b.h <= 0 or b.w <= 0:
        bad("bbox_size", f"h={b.h}, w={b.w} must be positive")
    if len(p.pose) != 2 * N_KEYPOINTS:
        bad("pose_arity", f"{len(p.pose)} values, expected {2 * N_KEYPOINTS}")
    elif not _finite(*p.pose):
        bad("pose_finite", "pose has non-finite values")
    g = p.gaze
    if not _finite(g.pitch, g.yaw):
        bad("gaze_finite", "gaze has non-finite values")
    else:
        if abs(g.pitch) > math.pi / 2:
            bad("gaze_range", f"pitch {g.pitch} outside [-pi/2, pi/2]")
        if abs(g.yaw) > math.pi:
            bad("gaze_range", f"yaw {g.yaw} outside [-pi, pi]")
    h = p.headpose
    if not _finite(h.pitch, h.yaw, h.roll):
        bad("headpose_finite", "headpose has non-finite values")
    elif max(abs(h.pitch), abs(h.yaw), abs(h.roll)) > math.pi:
        bad("headpose_range", "headpose angle outside [-pi, pi]")
    if p.velocity is not None and not _finite(p.velocity.vx, p.velocity.vy):
        bad("velocity_finite", "velocity has non-finite values")
    if not isinstance(p.role, Role):
        bad("role", f"unknown role {p.role!r}")


def validate_clip(c: ClipAnnotation) -> ValidationReport:
    """Collect every invariant violation in ``c`` without raising."""
    out: list = []
    if not (isinstance(c.fps, (int, float)) and math.isfinite(c.fps) and c.fps > 0):
        out.append(Finding("fps", f"fps {c.fps} must be positive"))
    if not isinstance(c.view, int) or not 0 <= c.view < N_VIEWS:
        out.append(Finding("view", f"view {c.view} outside [0, {N_VIEWS})"))
    T = len(c.frames)
    if T < 2:
        out.append(Finding("frame_count", f"T={T}, need at least 2 frames"))
    if not 1 <= c.occurrence_frame <= max(T, 1):
        out.append(Finding("occurrence_bound", f"occurrence_frame {c.occurrence_frame} outside [1, {T}]"))
    for k, f in enumerate(c.frames, start=1):
        if f.frame_id != k:
            out.append(Finding("frame_order", f"frame at position {k} has frame_id {f.frame_id}", f.frame_id))
        ids = [p.player_id for p in f.players]
        counts = Counter(ids)
        for pid, n in sorted(counts.items()):
            if n > 1:
                out.append(Finding("player_duplicate", f"player_id appears {n} times", f.frame_id, pid))
            if not 1 <= pid <= N_PLAYERS:
                out.append(Finding("player_id_range", "player_id outside [1, 10]", f.frame_id, pid))
        for pid in range(1, N_PLAYERS + 1):
            if pid not in counts:
                out.append(Finding("player_missing", "player absent from frame", f.frame_id, pid))
        for p in f.players:
            _check_player(p, f.frame_id, out)
    if 1 <= c.occurrence_frame <= T:
        f = c.frames[c.occurrence_frame - 1]
        if not any(p.player_id in OFFENSE and p.role in SHOT_ROLES for p in f.players):
            out.append(Finding("occurrence_role", "no offensive player is shooting at occurrence_frame",
                               c.occurrence_frame))
    return ValidationReport(c.clip_id, out)


# ---------------------------------------------------------------- statistics

_ATTRIBUTES = ("bbox", "pose", "gaze", "headpose", "velocity", "role")


@dataclass
class DatasetStats:
    n_clips: int = 0
    n_frames: int = 0
    duration_s: float = 0.0
    annotations: Counter = field(default_factory=Counter)
    roles: Counter = field(default_factory=Counter)
    views: Counter = field(default_factory=Counter)
    tactics: Counter = field(default_factory=Counter)

    def __add__(self, other: "DatasetStats") -> "DatasetStats":
        return DatasetStats(
            self.n_clips + other.n_clips,
            self.n_frames + other.n_frames,
            self.duration_s + other.duration_s,
            self.annotations + other.annotations,
            self.roles + other.roles,
            self.views + other.views,
            self.tactics + other.tactics,
        )

    def to_dict(self) -> dict:
        return {
            "n_clips": self.n_clips,
            "n_frames": self.n_frames,
            "duration_s": self.duration_s,
            "annotations": {k: self.annotations.get(k, 0) for k in _ATTRIBUTES},
            "roles": {r.value: self.roles.get(r.value, 0) for r in Role},
            "views": {str(v): self.views.get(v, 0) for v in range(N_VIEWS)},
            "tactics": {str(k): v for k, v in sorted(self.tactics.items())},
        }


def dataset_stats(clips: Iterable[ClipAnnotation]) -> DatasetStats:
    stats = DatasetStats()
    for c in clips:
        stats.n_clips += 1
        stats.n_frames += c.T
        stats.duration_s += c.duration
        stats.views[c.view] += 1
        stats.tactics[tactic_index(c.tactic)] += 1
        for f in c.frames:
            for p in f.players:
                for attr in ("bbox", "pose", "gaze", "headpose", "role"):
                    stats.annotations[attr] += 1
                if p.velocity is not None:
                    stats.annotations["velocity"] += 1
                stats.roles[p.role.value] += 1
    return stats
