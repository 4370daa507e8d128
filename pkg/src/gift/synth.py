"""Deterministic generator of annotated clips with a known shot frame.

Scenario per clip
-----------------
* Offensive players 1-5 wander on momentum-damped random walks, except
  the sampled shooter, who drives toward a fixed basket point at constant
  speed. The drive is timed so that the shooter reaches a stopping circle
  around the basket ``cue_window`` frames before the shot, which makes the
  shooter's distance to the basket in the early frames predictive of the
  shot frame.
* From ``occurrence - cue_window`` on the shooter decelerates geometrically
  and turns gaze and head toward the basket (the pre-shot signature).
* Defenders 6-10 each shadow the nearest attacker with a first-order lag.
* The shooter holds the ball until ``occurrence_frame`` and then takes the
  role implied by the tactic's shooting method for the rest of the clip.

Every clip is a pure function of ``(config, index)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .annotation import (
    N_PLAYERS,
    SHOT_ROLE_FOR,
    BBox,
    ClipAnnotation,
    FrameAnnotation,
    Gaze,
    HeadPose,
    PlayerFrameAnnotation,
    Role,
    TacticLabel,
    derive_velocities,
    serialize_clip,
    tactic_index,
)
from .dataset import FORMAT_VERSION, Manifest, ManifestEntry, split_indices
from .errors import ConfigError

SEEN_WINDOW_MAX = 10

# COCO-17 keypoints as fractions of the bbox (u across, v down).
POSE_TEMPLATE = np.array([
    (0.50, 0.06), (0.45, 0.04), (0.55, 0.04), (0.40, 0.06), (0.60, 0.06),
    (0.30, 0.20), (0.70, 0.20), (0.22, 0.36), (0.78, 0.36), (0.18, 0.50),
    (0.82, 0.50), (0.38, 0.52), (0.62, 0.52), (0.36, 0.74), (0.64, 0.74),
    (0.35, 0.96), (0.65, 0.96),
])

DEFAULT_NOISE = {"bbox": 1.0, "pose": 1.5, "gaze": 0.02, "headpose": 0.02}

_MODE = {
    # cue window, drive speed range (px/frame), noise multiplier
    "easy": (8, (22.0, 22.0), 1.0),
    "hard": (4, (16.0, 28.0), 3.0),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_clips: int = 100
    T: int = 50
    fps: float = 25.0
    occurrence_range: tuple = (26, 45)
    court: tuple = (1920, 1080)
    noise_scale: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))
    difficulty: str = "easy"

    def __post_init__(self):
        lo, hi = self.occurrence_range
        if self.n_clips < 1:
            raise ConfigError("n_clips must be positive")
        if self.difficulty not in _MODE:
            raise ConfigError(f"difficulty must be one of {sorted(_MODE)}")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        if lo <= SEEN_WINDOW_MAX:
            raise ConfigError(f"occurrence_range lower bound {lo} must exceed {SEEN_WINDOW_MAX}")
        if not lo <= hi <= self.T:
            raise ConfigError(f"occurrence_range {self.occurrence_range} incompatible with T={self.T}")
        if any(v < 0 for v in self.noise_scale.values()):
            raise ConfigError("noise_scale entries must be non-negative")
        unknown = set(self.noise_scale) - set(DEFAULT_NOISE)
        if unknown:
            raise ConfigError(f"unknown noise attributes {sorted(unknown)}")

    @property
    def cue_window(self) -> int:
        return _MODE[self.difficulty][0]

    def noise(self, attr: str) -> float:
        return self.noise_scale.get(attr, DEFAULT_NOISE[attr]) * _MODE[self.difficulty][2]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["occurrence_range"] = list(self.occurrence_range)
        d["court"] = list(self.court)
        d["noise_scale"] = dict(sorted(self.noise_scale.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for key in ("occurrence_range", "court"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _rng(cfg: SynthConfig, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, index])


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def _simulate(cfg: SynthConfig, rng: np.random.Generator):
    """Centre trajectories (T x 10 x 2), shooter id, occurrence frame and cue start."""
    T = cfg.T
    width, height = cfg.court
    basket = np.array([0.9 * width, 0.5 * height])
    lo, hi = cfg.occurrence_range
    occ = int(rng.integers(lo, hi + 1))
    shooter = int(rng.integers(1, 6))
    cue = cfg.cue_window
    cue_start = max(occ - cue, 1)
    smin, smax = _MODE[cfg.difficulty][1]
    speed = float(rng.uniform(smin, smax))
    stop_radius = 150.0
    approach = float(rng.uniform(-np.pi / 6, np.pi / 6))
    toward = np.array([np.cos(approach), np.sin(approach)])

    margin = 60.0
    lo_xy = np.array([margin, margin + 150.0])
    hi_xy = np.array([width - margin, height - margin])

    pos = np.zeros((T, N_PLAYERS, 2))
    # offense: random walks in the attacking half
    start = np.column_stack([rng.uniform(0.45 * width, 0.85 * width, 5), rng.uniform(0.2 * height, 0.85 * height, 5)])
    vel = rng.normal(0.0, 3.0, size=(5, 2))
    pos[0, :5] = start
    for k in range(1, T):
        vel = 0.8 * vel + rng.normal(0.0, 2.0, size=(5, 2))
        nxt = pos[k - 1, :5] + vel
        bounced = (nxt < lo_xy) | (nxt > hi_xy)
        vel[bounced] *= -1.0
        pos[k, :5] = np.clip(nxt, lo_xy, hi_xy)

    # shooter: drive at constant speed, then decelerate from cue_start
    s = shooter - 1
    stop = basket - stop_radius * toward
    track = np.zeros((T, 2))
    track[0] = stop - (cue_start - 1) * speed * toward
    step = speed
    for k in range(1, T):
        frame = k + 1
        if frame > cue_start:
            step *= 0.6
        track[k] = track[k - 1] + step * toward
    pos[:, s] = track

    # defenders start goal-side of attacker d, then chase whichever attacker is nearest
    def goal_side(p):
        return p + 40.0 * (basket - p) / (np.linalg.norm(basket - p) + 1e-9)

    for d in range(5):
        pos[0, 5 + d] = goal_side(pos[0, d]) + rng.normal(0.0, 10.0, 2)
        for k in range(1, T):
            here = pos[k - 1, 5 + d]
            mark = int(np.argmin(np.linalg.norm(pos[k, :5] - here, axis=1)))
            pos[k, 5 + d] = here + 0.35 * (goal_side(pos[k, mark]) - here) + rng.normal(0.0, 1.0, 2)
    return pos, shooter, occ, cue_start, basket


def generate_clip(cfg: SynthConfig, index: int) -> ClipAnnotation:
    if not 0 <= index < cfg.n_clips:
        raise IndexError(f"index {index} outside [0, {cfg.n_clips})")
    rng = _rng(cfg, index)
    tactic = TacticLabel.from_index(int(rng.integers(0, 54)))
    view = int(rng.integers(0, 5))
    pos, shooter, occ, cue_start, basket = _simulate(cfg, rng)
    T = cfg.T
    s = shooter - 1

    heights = rng.uniform(170.0, 210.0, size=N_PLAYERS)
    widths = 0.42 * heights
    step = np.diff(pos, axis=0, prepend=pos[:1])
    heading = np.arctan2(step[..., 1], step[..., 0])
    heading[0] = heading[1] if T > 1 else 0.0

    # gaze: attackers look along their heading, defenders at the shooter
    yaw = heading.copy()
    to_shooter = pos[:, s:s + 1] - pos[:, 5:]
    yaw[:, 5:] = np.arctan2(to_shooter[..., 1], to_shooter[..., 0])
    to_basket = np.arctan2(basket[1] - pos[:, s, 1], basket[0] - pos[:, s, 0])
    look_away = float(rng.uniform(0.6, 1.2)) * (1 if rng.random() < 0.5 else -1)
    for k in range(T):
        frame = k + 1
        if frame < cue_start:
            yaw[k, s] = to_basket[k] + look_away
        else:
            frac = min(1.0, (frame - cue_start + 1) / cfg.cue_window)
            yaw[k, s] = to_basket[k] + (1.0 - frac) * look_away
    yaw = _wrap(yaw + rng.normal(0.0, cfg.noise("gaze"), size=yaw.shape))
    gaze_pitch = np.clip(-0.1 + rng.normal(0.0, cfg.noise("gaze"), size=yaw.shape), -1.5, 1.5)
    head_yaw = _wrap(yaw + rng.normal(0.0, cfg.noise("headpose"), size=yaw.shape))
    head_pitch = np.clip(-0.05 + rng.normal(0.0, cfg.noise("headpose"), size=yaw.shape), -3.0, 3.0)
    head_roll = np.clip(rng.normal(0.0, cfg.noise("headpose"), size=yaw.shape), -3.0, 3.0)

    bx = pos[..., 0] - widths / 2 + rng.normal(0.0, cfg.noise("bbox"), size=pos.shape[:2])
    by = pos[..., 1] - heights + rng.normal(0.0, cfg.noise("bbox"), size=pos.shape[:2])
    pose_noise = rng.normal(0.0, cfg.noise("pose"), size=(T, N_PLAYERS, 17, 2))

    shot_role = SHOT_ROLE_FOR[tactic.shot]
    speeds = np.linalg.norm(step, axis=-1)
    frames = []
    for k in range(T):
        frame = k + 1
        players = []
        for i in range(N_PLAYERS):
            pid = i + 1
            if i == s:
                role = shot_role if frame >= occ else Role.HOLDING
            elif pid <= 5:
                role = Role.RUNNING if speeds[k, i] > 2.0 else Role.STANDING
            else:
                role = Role.DEFENDING
            kp = np.empty((17, 2))
            kp[:, 0] = bx[k, i] + POSE_TEMPLATE[:, 0] * widths[i]
            kp[:, 1] = by[k, i] + POSE_TEMPLATE[:, 1] * heights[i]
            kp += pose_noise[k, i]
            players.append(PlayerFrameAnnotation(
                player_id=pid,
                bbox=BBox(float(bx[k, i]), float(by[k, i]), float(heights[i]), float(widths[i])),
                pose=tuple(float(v) for v in kp.reshape(-1)),
                gaze=Gaze(float(gaze_pitch[k, i]), float(yaw[k, i])),
                headpose=HeadPose(float(head_pitch[k, i]), float(head_yaw[k, i]), float(head_roll[k, i])),
                role=role,
            ))
        frames.append(FrameAnnotation(frame_id=frame, players=tuple(players)))
    clip = ClipAnnotation(
        clip_id=f"synth-{cfg.seed}-{index:05d}",
        view=view,
        tactic=tactic,
        occurrence_frame=occ,
        frames=tuple(frames),
        fps=float(cfg.fps),
    )
    return derive_velocities(clip)


def shooter_of(c: ClipAnnotation) -> int:
    """Offensive player in a shot role at the occurrence frame (lowest id)."""
    f = c.frames[c.occurrence_frame - 1]
    return min(p.player_id for p in f.players if p.player_id <= 5 and p.role in SHOT_ROLE_FOR.values())


def clip_filename(index: int) -> str:
    return f"clip_{index:05d}.json"


def generate_corpus(cfg: SynthConfig) -> tuple[list, dict]:
    """All clips in memory plus the ``{"train", "val", "test"}`` index split."""
    clips = [generate_clip(cfg, i) for i in range(cfg.n_clips)]
    return clips, split_indices(cfg.n_clips, cfg.seed)


def generate_dataset(cfg: SynthConfig, out_dir) -> Manifest:
    """Write every clip and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = split_indices(cfg.n_clips, cfg.seed)
    split_of = {i: name for name, idx in splits.items() for i in idx}
    entries = []
    for i in range(cfg.n_clips):
        clip = generate_clip(cfg, i)
        name = clip_filename(i)
        (out / name).write_bytes(serialize_clip(clip))
        entries.append(ManifestEntry(
            clip_id=clip.clip_id,
            file=name,
            split=split_of[i],
            occurrence_frame=clip.occurrence_frame,
            shooter=shooter_of(clip),
            tactic=tactic_index(clip.tactic),
        ))
    manifest = Manifest(format_version=FORMAT_VERSION, clips=entries, config=cfg.to_dict())
    manifest.write(out)
    return manifest
