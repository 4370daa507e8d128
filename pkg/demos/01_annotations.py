"""Walk through one synthetic clip: schema, validation, velocities, statistics.

Run with ``python3 demos/01_annotations.py``.
"""
import dataclasses
import json

import numpy as np

from gift.annotation import (
    BBox,
    dataset_stats,
    derive_velocities,
    parse_clip,
    serialize_clip,
    validate_clip,
)
from gift.synth import SynthConfig, generate_clip, shooter_of

cfg = SynthConfig(seed=42, n_clips=4)
clip = generate_clip(cfg, 0)
print(f"clip {clip.clip_id}: {clip.T} frames at {clip.fps} fps, view {clip.view}")
print(f"tactic {clip.tactic} -> cell {clip.tactic.index} of 54")
print(f"shot at frame {clip.occurrence_frame} by player {shooter_of(clip)}")

# The wire format is compact, key-sorted JSON; parsing it back gives the same object.
blob = serialize_clip(clip)
print(f"\nserialized size: {len(blob) / 1024:.0f} KiB")
assert parse_clip(blob) == clip
doc = json.loads(blob)
print("first player of frame 1:", json.dumps(doc["frames"][0]["players"][0])[:160], "...")

# Velocities are finite differences of the bbox anchor, zero on frame 1.
s = shooter_of(clip)
speeds = [np.hypot(f.player(s).velocity.vx, f.player(s).velocity.vy) for f in clip.frames]
print(f"\nshooter speed (px/s), frames 1-12: {np.round(speeds[:12]).astype(int).tolist()}")
print(f"shooter speed (px/s), last 8 frames before the shot: "
      f"{np.round(speeds[clip.occurrence_frame - 9:clip.occurrence_frame - 1]).astype(int).tolist()}")

# Validation reports every broken invariant rather than stopping at the first.
f0 = clip.frames[0]
bad_player = dataclasses.replace(f0.players[0], bbox=BBox(10.0, 10.0, -4.0, 30.0))
bad = dataclasses.replace(clip, occurrence_frame=clip.T + 3,
                          frames=(dataclasses.replace(f0, players=(bad_player, *f0.players[1:])), *clip.frames[1:]))
print("\nvalidation of a corrupted copy:")
for finding in validate_clip(bad).findings:
    print("  ", finding)

stats = dataset_stats(generate_clip(cfg, i) for i in range(cfg.n_clips))
print("\nstats over 4 clips:", json.dumps(stats.to_dict(), sort_keys=True)[:300], "...")

# Stripping velocities and deriving them again is a no-op.
stripped = dataclasses.replace(clip, frames=tuple(
    dataclasses.replace(f, players=tuple(dataclasses.replace(p, velocity=None) for p in f.players))
    for f in clip.frames))
assert derive_velocities(stripped) == clip
print("\nre-derived velocities match the stored ones")
