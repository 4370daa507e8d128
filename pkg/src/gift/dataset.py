"""Dataset directories: clip JSON files plus a ``manifest.json``.

Manifest layout::

    {"format_version": "1.0",
     "config": {...generator settings, may be empty...},
     "clips": [{"clip_id": ..., "file": "clip_00000.json", "split": "train",
                "occurrence_frame": 31, "shooter": 4, "tactic": 17}, ...]}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .annotation import ClipAnnotation, parse_clip
from .errors import SchemaError

FORMAT_VERSION = "1.0"
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")
TEST_FRACTION = 0.2
VAL_FRACTION = 0.2  # of the non-test clips, i.e. train:val = 4:1


def split_indices(n: int, seed: int) -> dict:
    """Shuffle ``range(n)`` and cut 20% test, then 4:1 train/val on the rest."""
    perm = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED]).permutation(n)
    n_test = int(round(TEST_FRACTION * n))
    n_val = int(round(VAL_FRACTION * (n - n_test)))
    return {
        "train": sorted(int(i) for i in perm[n_test + n_val:]),
        "val": sorted(int(i) for i in perm[n_test:n_test + n_val]),
        "test": sorted(int(i) for i in perm[:n_test]),
    }


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    file: str
    split: str
    occurrence_frame: Optional[int] = None
    shooter: Optional[int] = None
    tactic: Optional[int] = None


@dataclass
class Manifest:
    format_version: str
    clips: list
    config: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        doc = {
            "format_version": self.format_version,
            "config": self.config,
            "clips": [asdict(e) for e in self.clips],
        }
        return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def write(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_bytes(self.to_bytes())
        return path

    def split(self, name: str) -> list:
        return [e for e in self.clips if e.split == name]

    @classmethod
    def read(cls, directory) -> "Manifest":
        path = Path(directory) / MANIFEST_NAME
        doc = json.loads(path.read_text())
        if doc.get("format_version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported manifest format {doc.get('format_version')!r}")
        entries = []
        for e in doc["clips"]:
            if e.get("split") not in SPLITS:
                raise SchemaError(f"clip {e.get('clip_id')!r}: unknown split {e.get('split')!r}")
            entries.append(ManifestEntry(**e))
        return cls(doc["format_version"], entries, doc.get("config", {}))


def load_split(directory, split: str | None = None) -> list[ClipAnnotation]:
    """Parse every clip of ``split`` (or all clips) listed in the manifest."""
    directory = Path(directory)
    manifest = Manifest.read(directory)
    entries = manifest.clips if split is None else manifest.split(split)
    return [parse_clip((directory / e.file).read_bytes()) for e in entries]
