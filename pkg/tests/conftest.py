import copy
import json

import numpy as np
import pytest

from gift.annotation import (
    BBox,
    ClipAnnotation,
    FrameAnnotation,
    Gaze,
    HeadPose,
    Passing,
    PlayerFrameAnnotation,
    PnR,
    Role,
    Shot,
    TacticLabel,
)


def make_player(pid, frame, role=None):
    """Hand-built player whose values depend only on (pid, frame)."""
    if role is None:
        role = Role.HOLDING if pid == 3 else (Role.DEFENDING if pid > 5 else Role.STANDING)
    x = 100.0 * pid + 5.0 * (frame - 1)
    y = 400.0 + 10.0 * pid
    return PlayerFrameAnnotation(
        player_id=pid,
        bbox=BBox(x, y, 180.0, 75.0),
        pose=tuple(float(x + j) for j in range(34)),
        gaze=Gaze(-0.1, 0.25 * pid - 1.0),
        headpose=HeadPose(0.05, 0.2 * pid - 1.0, 0.01),
        role=role,
    )


def make_clip(T=2, occurrence=2, clip_id="fixture"):
    """Minimal valid clip: player 3 holds the ball then shoots at ``occurrence``."""
    frames = []
    for k in range(1, T + 1):
        players = []
        for pid in range(1, 11):
            role = Role.SHOOTING if (pid == 3 and k >= occurrence) else None
            players.append(make_player(pid, k, role))
        frames.append(FrameAnnotation(k, tuple(players)))
    return ClipAnnotation(
        clip_id=clip_id,
        view=2,
        tactic=TacticLabel(Passing.OnePass, PnR.NoPnR, True, Shot.Shoot),
        occurrence_frame=occurrence,
        frames=tuple(frames),
        fps=25.0,
    )


FIXTURE_DOC = {
    "clip_id": "hand-2f",
    "view": 1,
    "fps": 25.0,
    "occurrence_frame": 2,
    "tactic": {"passing": "NoPass", "pnr": "OnePnR", "drive": False, "shot": "Layup"},
    "frames": [
        {
            "frame_id": k,
            "players": [
                {
                    "player_id": pid,
                    "bbox": [100.0 * pid + 5.0 * (k - 1), 400.0, 180.0, 75.0],
                    "pose": [float(j) for j in range(34)],
                    "gaze": [0.0, 0.5],
                    "headpose": [0.0, 0.5, 0.0],
                    "role": ("laying-up" if k == 2 else "holding") if pid == 1
                    else ("defending" if pid > 5 else "running"),
                }
                for pid in range(1, 11)
            ],
        }
        for k in (1, 2)
    ],
}


@pytest.fixture
def fixture_doc():
    return copy.deepcopy(FIXTURE_DOC)


@pytest.fixture
def fixture_bytes(fixture_doc):
    return json.dumps(fixture_doc).encode()


@pytest.fixture
def clip():
    return make_clip(T=6, occurrence=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, collected by tests/test_acceptance.py
# and repeated at the end of the run so it survives output capture.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
