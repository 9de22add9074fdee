"""Quadruple datasets: parsing, per-timestamp snapshots, splits and filters.

Files are tab-separated integer ids, one fact per line::

    s<TAB>r<TAB>o<TAB>t                 # event datasets
    s<TAB>r<TAB>o<TAB>t_start<TAB>t_end # interval (fact) datasets

An optional ``stat.txt`` holds ``|E|<TAB>|R|`` for vocabulary validation.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")
INTERVAL_POLICIES = ("expand", "start")


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


class Quadruple(NamedTuple):
    s: int
    r: int
    o: int
    t: int


@dataclass
class ParsedFile:
    quads: list[Quadruple]
    time_index: dict[int, int]
    num_entities: int
    num_relations: int


def _read_rows(path: Path, interval_policy: str, num_entities=None, num_relations=None):
    if interval_policy not in INTERVAL_POLICIES:
        raise DataError(f"unknown interval policy {interval_policy!r}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t") if "\t" in line else line.split()
            if len(fields) not in (4, 5):
                raise DataError(f"{path}:{lineno}: expected 4 or 5 fields, got {len(fields)}")
            try:
                vals = [int(f) for f in fields]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field in {line!r}") from None
            s, r, o = vals[:3]
            if min(s, r, o) < 0:
                raise DataError(f"{path}:{lineno}: negative id")
            if num_entities is not None and (s >= num_entities or o >= num_entities):
                raise DataError(f"{path}:{lineno}: entity id exceeds declared vocabulary {num_entities}")
            if num_relations is not None and r >= num_relations:
                raise DataError(f"{path}:{lineno}: relation id exceeds declared vocabulary {num_relations}")
            if len(vals) == 4:
                rows.append((s, r, o, vals[3]))
                continue
            ts, te = vals[3], vals[4]
            if interval_policy == "start":
                rows.append((s, r, o, ts))
                continue
            if te < ts:
                raise DataError(f"{path}:{lineno}: interval end {te} precedes start {ts}")
            rows.extend((s, r, o, year) for year in range(ts, te + 1))
    return rows


def read_stat(directory) -> tuple[int, int] | None:
    path = Path(directory) / "stat.txt"
    if not path.exists():
        return None
    fields = path.read_text(encoding="utf-8").split()
    if len(fields) < 2:
        raise DataError(f"{path}: expected '|E|\\t|R|'")
    return int(fields[0]), int(fields[1])


def build_time_index(raw_times: Iterable[int]) -> dict[int, int]:
    return {t: i for i, t in enumerate(sorted(set(raw_times)))}


def parse_quadruples(path, interval_policy: str = "expand", num_entities=None,
                     num_relations=None, time_index=None) -> ParsedFile:
    """Parse one quadruple file and remap raw times to contiguous indices.

    Interval rows are expanded to one quadruple per integer time bucket in
    [t_start, t_end] under the ``expand`` policy, or reduced to t_start under
    ``start``. Pass a shared ``time_index`` to remap several files jointly.
    """
    rows = _read_rows(Path(path), interval_policy, num_entities, num_relations)
    if time_index is None:
        time_index = build_time_index(r[3] for r in rows)
    quads = [Quadruple(s, r, o, time_index[t]) for s, r, o, t in rows]
    ne = num_entities if num_entities is not None else 1 + max((max(q.s, q.o) for q in quads), default=-1)
    nr = num_relations if num_relations is not None else 1 + max((q.r for q in quads), default=-1)
    return ParsedFile(quads, time_index, ne, nr)


class SnapshotGraph:
    """All facts at one timestamp, with an outgoing-neighbourhood index."""

    def __init__(self, t: int, edges: Iterable[tuple[int, int, int]] = ()):
        self.t = int(t)
        self.edges: tuple[tuple[int, int, int], ...] = tuple(sorted(set(
            (int(s), int(r), int(o)) for s, r, o in edges)))

    def __len__(self):
        return len(self.edges)

    def __repr__(self):
        return f"SnapshotGraph(t={self.t}, edges={len(self.edges)})"

    def __eq__(self, other):
        return isinstance(other, SnapshotGraph) and self.t == other.t and self.edges == other.edges

    def __hash__(self):
        return hash((self.t, self.edges))

    @cached_property
    def neighbor_index(self) -> dict[int, tuple[tuple[int, int], ...]]:
        """subject -> its outgoing (relation, object) pairs."""
        index: dict[int, list] = defaultdict(list)
        for s, r, o in self.edges:
            index[s].append((r, o))
        return {s: tuple(v) for s, v in index.items()}

    @cached_property
    def entity_set(self) -> frozenset[int]:
        return frozenset(e for s, _, o in self.edges for e in (s, o))

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        a = np.array(self.edges, dtype=np.int64)
        return a[:, 0], a[:, 1], a[:, 2]

    @cached_property
    def subject_relation_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted({(s, r) for s, r, _ in self.edges}))

    def reversed(self) -> "SnapshotGraph":
        """The same facts with subject and object swapped."""
        return SnapshotGraph(self.t, ((o, r, s) for s, r, o in self.edges))

    def with_time(self, t: int) -> "SnapshotGraph":
        return SnapshotGraph(t, self.edges)


def build_snapshots(quads: Iterable[Quadruple], num_times: int | None = None) -> list[SnapshotGraph]:
    """One snapshot per timestamp 0..num_times-1 (gaps give empty snapshots)."""
    grouped: dict[int, list] = defaultdict(list)
    for q in quads:
        grouped[int(q[3])].append((q[0], q[1], q[2]))
    if num_times is None:
        num_times = 1 + max(grouped, default=-1)
    if grouped and max(grouped) >= num_times:
        raise DataError(f"timestamp {max(grouped)} outside 0..{num_times - 1}")
    return [SnapshotGraph(t, grouped.get(t, ())) for t in range(num_times)]


def flatten(snapshots: Iterable[SnapshotGraph]) -> list[Quadruple]:
    return [Quadruple(s, r, o, g.t) for g in snapshots for s, r, o in g.edges]


@dataclass
class DatasetSplit:
    train: list[Quadruple]
    valid: list[Quadruple]
    test: list[Quadruple]
    boundaries: tuple[int, int]

    @property
    def all(self) -> list[Quadruple]:
        return self.train + self.valid + self.test


def split_boundaries(num_times: int, ratios: Sequence[float] = (0.8, 0.1, 0.1)) -> tuple[int, int]:
    """Timestamp indices where validation and test begin: floor of cumulative ratios."""
    if len(ratios) != 3:
        raise DataError("ratios must have three entries")
    fr = [Fraction(r).limit_denominator(10**9) for r in ratios]
    if any(f < 0 for f in fr) or abs(float(sum(fr)) - 1.0) > 1e-9:
        raise DataError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    if num_times < 3:
        raise DataError(f"need at least 3 timestamps to split, got {num_times}")
    b1 = math.floor(fr[0] * num_times)
    b2 = math.floor((fr[0] + fr[1]) * num_times)
    return b1, b2


def chronological_split(snapshots: Sequence[SnapshotGraph],
                        ratios: Sequence[float] = (0.8, 0.1, 0.1)) -> DatasetSplit:
    b1, b2 = split_boundaries(len(snapshots), ratios)
    quads = flatten(snapshots)
    return DatasetSplit(
        train=[q for q in quads if q.t < b1],
        valid=[q for q in quads if b1 <= q.t < b2],
        test=[q for q in quads if q.t >= b2],
        boundaries=(b1, b2),
    )


@dataclass
class FilterSet:
    """Known-true completions over train, valid and test.

    ``objects[(s, r, t)]`` and ``subjects[(o, r, t)]`` are keyed by time; the
    ``*_any`` maps drop the timestamp and back the (time-agnostic) filtered
    ranking protocol.
    """

    objects: dict[tuple[int, int, int], set[int]] = field(default_factory=dict)
    subjects: dict[tuple[int, int, int], set[int]] = field(default_factory=dict)
    objects_any: dict[tuple[int, int], set[int]] = field(default_factory=dict)
    subjects_any: dict[tuple[int, int], set[int]] = field(default_factory=dict)

    def known_objects(self, s: int, r: int, t: int | None = None) -> set[int]:
        if t is None:
            return self.objects_any.get((s, r), set())
        return self.objects.get((s, r, t), set())

    def known_subjects(self, o: int, r: int, t: int | None = None) -> set[int]:
        if t is None:
            return self.subjects_any.get((o, r), set())
        return self.subjects.get((o, r, t), set())


def build_filter(quads: Iterable[Quadruple]) -> FilterSet:
    f = FilterSet()
    for s, r, o, t in quads:
        f.objects.setdefault((s, r, t), set()).add(o)
        f.subjects.setdefault((o, r, t), set()).add(s)
        f.objects_any.setdefault((s, r), set()).add(o)
        f.subjects_any.setdefault((o, r), set()).add(s)
    return f


@dataclass
class TKGDataset:
    """A split temporal knowledge graph with contiguous time indices."""

    num_entities: int
    num_relations: int
    num_times: int
    train: list[Quadruple]
    valid: list[Quadruple]
    test: list[Quadruple]
    name: str = ""

    @cached_property
    def snapshots(self) -> list[SnapshotGraph]:
        return build_snapshots(self.train + self.valid + self.test, self.num_times)

    @cached_property
    def filter(self) -> FilterSet:
        return build_filter(self.train + self.valid + self.test)

    @property
    def boundaries(self) -> tuple[int, int]:
        """First validation and first test timestamp."""
        b1 = min((q.t for q in self.valid), default=None)
        b2 = min((q.t for q in self.test), default=self.num_times)
        if b1 is None:
            b1 = b2
        return b1, b2

    @property
    def split(self) -> DatasetSplit:
        return DatasetSplit(self.train, self.valid, self.test, self.boundaries)

    def summary(self) -> dict[str, int]:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
            "timestamps": self.num_times,
        }

    def check(self) -> None:
        for name in ("train", "valid", "test"):
            for q in getattr(self, name):
                if not (0 <= q.s < self.num_entities and 0 <= q.o < self.num_entities):
                    raise DataError(f"{name}: entity id out of range in {q}")
                if not 0 <= q.r < self.num_relations:
                    raise DataError(f"{name}: relation id out of range in {q}")
                if not 0 <= q.t < self.num_times:
                    raise DataError(f"{name}: timestamp out of range in {q}")
        tt = {q.t for q in self.train}
        tv = {q.t for q in self.valid}
        ts = {q.t for q in self.test}
        if (tt & tv) or (tt & ts) or (tv & ts):
            raise DataError("splits share timestamps")


def load_directory(directory, interval_policy: str = "expand", ratios=(0.8, 0.1, 0.1)) -> TKGDataset:
    """Load ``train/valid/test.txt`` (or a single ``data.txt`` split chronologically)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"data directory {directory} does not exist")
    stat = read_stat(directory)
    ne, nr = stat if stat else (None, None)
    files = [directory / f for f in SPLIT_FILES]
    if all(f.exists() for f in files):
        rows = [_read_rows(f, interval_policy, ne, nr) for f in files]
        index = build_time_index(r[3] for part in rows for r in part)
        parts = [[Quadruple(s, r, o, index[t]) for s, r, o, t in part] for part in rows]
        every = [q for p in parts for q in p]
        if ne is None:
            ne = 1 + max((max(q.s, q.o) for q in every), default=-1)
        if nr is None:
            nr = 1 + max((q.r for q in every), default=-1)
        ds = TKGDataset(ne, nr, len(index), *parts, name=directory.name)
    elif (directory / "data.txt").exists():
        parsed = parse_quadruples(directory / "data.txt", interval_policy, ne, nr)
        snaps = build_snapshots(parsed.quads, len(parsed.time_index))
        split = chronological_split(snaps, ratios)
        ds = TKGDataset(parsed.num_entities, parsed.num_relations, len(parsed.time_index),
                        split.train, split.valid, split.test, name=directory.name)
    else:
        raise DataError(f"{directory}: no train.txt/valid.txt/test.txt or data.txt found")
    if not (ds.train or ds.valid or ds.test):
        raise DataError(f"{directory}: dataset is empty")
    ds.check()
    return ds


def write_split_files(dataset: TKGDataset, directory) -> None:
    """Write the dataset as integer-id TSV files plus ``stat.txt``."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    for name, quads in (("train.txt", dataset.train), ("valid.txt", dataset.valid), ("test.txt", dataset.test)):
        with open(directory / name, "w", encoding="utf-8", newline="\n") as fh:
            for q in quads:
                fh.write(f"{q.s}\t{q.r}\t{q.o}\t{q.t}\n")
    (directory / "stat.txt").write_text(f"{dataset.num_entities}\t{dataset.num_relations}\n", encoding="utf-8")
