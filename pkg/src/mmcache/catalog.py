"""Multi-modal content universe: QoS classes, catalog construction, releases."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

VIDEO = "video"
AUDIO = "audio"
HAPTIC = "haptic"
MODALITIES = (VIDEO, AUDIO, HAPTIC)

KBPS = 1e3
MBPS = 1e6
KB = 1_000
MB = 1_000_000


@dataclass(frozen=True)
class QosRequirement:
    min_bandwidth: float  # bits/s
    max_bandwidth: float  # bits/s
    max_latency: float  # seconds

    def __post_init__(self):
        if not 0 <= self.min_bandwidth <= self.max_bandwidth:
            raise ValueError(f"bad bandwidth range {self.min_bandwidth}..{self.max_bandwidth}")
        if self.max_latency <= 0:
            raise ValueError("max_latency must be positive")


# class name -> (modality, requirement). Single-valued rows use min == max;
# "< x" rows take a tenth of the bound as their floor.
QOS_TABLE: dict[str, tuple[str, QosRequirement]] = {
    "1080p 30 fps video": (VIDEO, QosRequirement(8 * MBPS, 15 * MBPS, 0.100)),
    "1080p 60 fps video": (VIDEO, QosRequirement(12 * MBPS, 24 * MBPS, 0.100)),
    "4k 30 fps video": (VIDEO, QosRequirement(25 * MBPS, 50 * MBPS, 0.100)),
    "4k 60 fps video": (VIDEO, QosRequirement(50 * MBPS, 100 * MBPS, 0.100)),
    "8k 30 fps video": (VIDEO, QosRequirement(100 * MBPS, 150 * MBPS, 0.100)),
    "8k 60 fps video": (VIDEO, QosRequirement(150 * MBPS, 200 * MBPS, 0.100)),
    "mp3 audio": (AUDIO, QosRequirement(64 * KBPS, 320 * KBPS, 0.100)),
    "blu-ray audio": (AUDIO, QosRequirement(448 * KBPS, 448 * KBPS, 0.010)),
    "home theater audio": (AUDIO, QosRequirement(1 * MBPS, 6 * MBPS, 0.050)),
    "low-fidelity haptic": (HAPTIC, QosRequirement(10 * KBPS, 100 * KBPS, 0.010)),
    "high-fidelity haptic": (HAPTIC, QosRequirement(100 * KBPS, 1 * MBPS, 0.001)),
}

_ALIASES = {
    "mpeg-1 audio layer iii": "mp3 audio",
    "mpeg-1 audio layer iii (mp3) audio": "mp3 audio",
    "blue-ray quality audio": "blu-ray audio",
    "blu-ray quality audio": "blu-ray audio",
    "home theater quality audio": "home theater audio",
}

CLASSES_BY_MODALITY = {
    m: tuple(name for name, (mod, _) in QOS_TABLE.items() if mod == m) for m in MODALITIES
}

DEFAULT_MIX = {VIDEO: 0.4, AUDIO: 0.3, HAPTIC: 0.3}
DEFAULT_SIZE_RANGES = {
    VIDEO: (50 * MB, 500 * MB),
    AUDIO: (1 * MB, 10 * MB),
    HAPTIC: (10 * KB, 500 * KB),
}


def canonical_class(modality_class: str) -> str:
    key = modality_class.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in QOS_TABLE:
        raise KeyError(f"unknown modality class: {modality_class!r}")
    return key


def qos_profile(modality_class: str) -> QosRequirement:
    return QOS_TABLE[canonical_class(modality_class)][1]


def modality_of(modality_class: str) -> str:
    return QOS_TABLE[canonical_class(modality_class)][0]


@dataclass(frozen=True)
class Content:
    id: int
    modality_class: str
    modality: str
    size: int  # bytes
    qos: QosRequirement

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"content {self.id}: size must be positive")


def make_content(content_id: int, modality_class: str, size: int) -> Content:
    name = canonical_class(modality_class)
    modality, qos = QOS_TABLE[name]
    return Content(content_id, name, modality, int(size), qos)


@dataclass
class CatalogSpec:
    count: int = 50
    modality_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    size_ranges: dict[str, tuple[int, int]] = field(
        default_factory=lambda: dict(DEFAULT_SIZE_RANGES)
    )
    seed: int = 1


def _apportion(count: int, mix: dict[str, float]) -> dict[str, int]:
    # largest-remainder: every modality lands within 1 of its expected count
    quotas = {m: count * mix.get(m, 0.0) for m in MODALITIES}
    counts = {m: int(np.floor(q)) for m, q in quotas.items()}
    short = count - sum(counts.values())
    by_remainder = sorted(MODALITIES, key=lambda m: (-(quotas[m] - counts[m]), MODALITIES.index(m)))
    for m in by_remainder[:short]:
        counts[m] += 1
    return counts


class Catalog:
    """Ordered collection of contents with monotonically increasing ids."""

    def __init__(self, contents: Iterable[Content] = (), next_id: int | None = None):
        self.contents: list[Content] = sorted(contents, key=lambda c: c.id)
        self._by_id = {c.id: c for c in self.contents}
        if len(self._by_id) != len(self.contents):
            raise ValueError("duplicate content ids")
        top = self.contents[-1].id if self.contents else 0
        self.next_id = top + 1 if next_id is None else next_id
        if self.next_id <= top:
            raise ValueError("next_id must exceed every existing id")

    def __len__(self):
        return len(self.contents)

    def __iter__(self):
        return iter(self.contents)

    def __contains__(self, content_id):
        return content_id in self._by_id

    def __getitem__(self, content_id: int) -> Content:
        return self._by_id[content_id]

    def __eq__(self, other):
        return (
            isinstance(other, Catalog)
            and self.contents == other.contents
            and self.next_id == other.next_id
        )

    @property
    def ids(self) -> list[int]:
        return [c.id for c in self.contents]

    def copy(self) -> "Catalog":
        return Catalog(self.contents, self.next_id)

    def max_size(self) -> int:
        return max((c.size for c in self.contents), default=1)

    def release(self, modality_class: str, size: int, time: int | None = None) -> Content:
        return release_content(self, modality_class, size, time)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CATALOG_HEADER)
        for c in self.contents:
            w.writerow([c.id, c.modality, c.modality_class, c.size,
                        repr(c.qos.min_bandwidth), repr(c.qos.max_bandwidth),
                        repr(c.qos.max_latency)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Catalog":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(make_content(int(r["id"]), r["modality_class"], int(r["size_bytes"])) for r in rows)


CATALOG_HEADER = ["id", "modality", "modality_class", "size_bytes",
                  "min_bw_bps", "max_bw_bps", "max_latency_s"]


def build_catalog(spec: CatalogSpec) -> Catalog:
    if spec.count < 0:
        raise ValueError("count must be non-negative")
    total = sum(spec.modality_mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"modality mix sums to {total}, not 1")
    unknown = set(spec.modality_mix) - set(MODALITIES)
    if unknown:
        raise ValueError(f"unknown modalities in mix: {sorted(unknown)}")

    rng = np.random.default_rng(spec.seed)
    counts = _apportion(spec.count, spec.modality_mix)
    modalities = [m for m in MODALITIES for _ in range(counts[m])]
    modalities = [modalities[i] for i in rng.permutation(len(modalities))]

    contents = []
    for i, m in enumerate(modalities, start=1):
        classes = CLASSES_BY_MODALITY[m]
        cls_name = classes[int(rng.integers(len(classes)))]
        lo, hi = spec.size_ranges[m]
        size = int(rng.integers(lo, hi + 1))
        contents.append(make_content(i, cls_name, size))
    return Catalog(contents, next_id=spec.count + 1)


def release_content(catalog: Catalog, modality_class: str, size: int, time: int | None = None) -> Content:
    """Append a new content with the next free id. ``time`` is informational."""
    if size <= 0:
        raise ValueError("size must be positive")
    content = make_content(catalog.next_id, modality_class, size)
    catalog.contents.append(content)
    catalog._by_id[content.id] = content
    catalog.next_id += 1
    return content
