"""Dataset manifests (JSONL), class balancing plans and the online augmentation stream."""

from __future__ import annotations

import json
import zlib
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .augment import AugmentSpec, augment
from .dedup import dedup_filter
from .phash import from_hex, to_hex

SPLITS = ("train", "val", "test", "unassigned")
ORIGINS = ("original", "augmented")


@dataclass(frozen=True)
class Record:
    path: str
    label: str
    split: str = "unassigned"
    phash: int | None = None
    origin: str = "original"
    source_id: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if (self.origin == "augmented") != (self.source_id is not None):
            raise ValueError("augmented records need a source_id; originals must not have one")

    def to_json(self) -> str:
        d = asdict(self)
        d["phash"] = None if self.phash is None else to_hex(self.phash)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Record":
        d = json.loads(line)
        unknown = set(d) - {"path", "label", "split", "phash", "origin", "source_id"}
        if unknown:
            raise ValueError(f"unknown manifest fields {sorted(unknown)}")
        if d.get("phash") is not None:
            d["phash"] = from_hex(d["phash"])
        return cls(**d)


class Manifest:
    """Ordered records with unique paths; augmented records point at originals."""

    def __init__(self, records: Iterable[Record] = ()):
        self.records = list(records)
        self.validate()

    def validate(self) -> None:
        seen = set()
        for r in self.records:
            if r.path in seen:
                raise ValueError(f"duplicate manifest path {r.path!r}")
            seen.add(r.path)
        originals = {r.path for r in self.records if r.origin == "original"}
        for r in self.records:
            if r.origin == "augmented" and r.source_id not in originals:
                raise ValueError(f"augmented record {r.path!r} references missing {r.source_id!r}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def classes(self) -> list[str]:
        return sorted({r.label for r in self.records})

    def class_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.classes())}

    def select(self, split: str | None = None, origin: str | None = None) -> list[Record]:
        return [r for r in self.records
                if (split is None or r.split == split) and (origin is None or r.origin == origin)]

    def with_records(self, records) -> "Manifest":
        return Manifest(records)

    def save(self, path) -> None:
        Path(path).write_text("".join(r.to_json() + "\n" for r in self.records))

    @classmethod
    def load(cls, path) -> "Manifest":
        lines = Path(path).read_text().splitlines()
        return cls(Record.from_json(l) for l in lines if l.strip())


# ---------------------------------------------------------------------------
# balancing
# ---------------------------------------------------------------------------


def balance_plan(manifest: Manifest, target: int = 5000) -> dict[str, int]:
    """Augmented samples needed per class to reach ``target`` (0 if already there)."""
    counts = Counter(r.label for r in manifest.select(origin="original"))
    if not counts:
        raise ValueError("manifest has no original records")
    return {c: max(0, target - n) for c, n in sorted(counts.items())}


def plan_records(manifest: Manifest, target: int = 5000, split: str | None = None) -> list[Record]:
    """Virtual augmented records, sourced round-robin over each class's originals.

    With ``split`` given, only originals of that split are sources and the
    target applies within the split.
    """
    by_class: dict[str, list[Record]] = defaultdict(list)
    for r in manifest.select(split=split, origin="original"):
        by_class[r.label].append(r)
    out = []
    for label in sorted(by_class):
        originals = by_class[label]
        for j in range(max(0, target - len(originals))):
            src = originals[j % len(originals)]
            out.append(Record(f"{src.path}#aug{j // len(originals)}", label, src.split,
                              None, "augmented", src.path))
    return out


def _key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def augment_rng(seed: int, epoch: int, record_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, _key(record_id)]))


def online_augment_stream(records: Iterable[Record], loader, spec: AugmentSpec, seed: int,
                          epoch: int) -> Iterator[tuple[Record, np.ndarray]]:
    """Yield (record, image); augmented records are regenerated from their source.

    The image for an augmented record depends only on (seed, epoch, record path),
    so nothing is stored and a fixed epoch replays bit-identically.
    """
    for r in records:
        if r.origin == "augmented":
            img = augment(loader(r.source_id), spec, augment_rng(seed, epoch, r.path))
        else:
            img = loader(r.path)
        yield r, img


def dedup_records(records: list[Record], tau: float = 0.30):
    """Run the greedy filter over hashed records.

    Returns (retained records, rejection rows of (rejected path, nearest path, similarity)).
    """
    if any(r.phash is None for r in records):
        raise ValueError("every record must be hashed before de-duplication")
    kept, rejections = dedup_filter([r.phash for r in records], tau)
    log = [(records[x.index].path, records[x.nearest].path, x.similarity) for x in rejections]
    return [records[i] for i in kept], log


def assign(records: list[Record], **changes) -> list[Record]:
    return [replace(r, **changes) for r in records]
