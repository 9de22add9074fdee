import random
from collections import defaultdict

import pytest
from hypothesis import given, settings, strategies as st

from curvtkg.graphdata import (
    DataError, Quadruple, SnapshotGraph, TKGDataset, build_filter, build_snapshots,
    chronological_split, flatten, load_directory, parse_quadruples, split_boundaries,
    write_split_files,
)


def write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def test_parse_empty_file(tmp_path):
    parsed = parse_quadruples(write(tmp_path / "a.txt", []))
    assert parsed.quads == [] and len(parsed.time_index) == 0


def test_parse_single_line(tmp_path):
    parsed = parse_quadruples(write(tmp_path / "a.txt", ["3\t1\t7\t0"]))
    assert parsed.quads == [Quadruple(3, 1, 7, 0)]


def test_parse_remaps_times_and_expands_intervals(tmp_path):
    p = write(tmp_path / "a.txt", ["0\t0\t1\t1990\t1992", "1\t0\t2\t2000"])
    parsed = parse_quadruples(p)
    assert [q.t for q in parsed.quads] == [0, 1, 2, 3]
    assert parsed.time_index == {1990: 0, 1991: 1, 1992: 2, 2000: 3}
    start = parse_quadruples(p, interval_policy="start")
    assert [q.t for q in start.quads] == [0, 1]


@pytest.mark.parametrize("line, msg", [
    ("1\t2\t3", "expected 4 or 5 fields"),
    ("1\tx\t3\t0", "non-integer"),
    ("1\t2\t3\t5\t4", "precedes"),
    ("-1\t0\t0\t0", "negative"),
])
def test_parse_errors_report_line_numbers(tmp_path, line, msg):
    p = write(tmp_path / "a.txt", ["0\t0\t1\t0", line])
    with pytest.raises(DataError, match=msg) as err:
        parse_quadruples(p)
    assert ":2:" in str(err.value)


def test_parse_vocabulary_check(tmp_path):
    p = write(tmp_path / "a.txt", ["0\t0\t9\t0"])
    with pytest.raises(DataError, match="vocabulary"):
        parse_quadruples(p, num_entities=5)
    with pytest.raises(DataError, match="vocabulary"):
        parse_quadruples(p, num_relations=0)


def test_build_snapshots_examples():
    assert build_snapshots([], 0) == []
    snaps = build_snapshots([Quadruple(0, 0, 1, 0), Quadruple(1, 0, 2, 2)], 3)
    assert [len(g) for g in snaps] == [1, 0, 1]
    assert snaps[1].entity_set == frozenset() and snaps[1].neighbor_index == {}


def test_build_snapshots_vs_group_by():
    r = random.Random(0)
    quads = [Quadruple(r.randrange(4), r.randrange(2), r.randrange(4), r.randrange(2)) for _ in range(5)]
    groups = defaultdict(set)
    for q in quads:
        groups[q.t].add((q.s, q.r, q.o))
    snaps = build_snapshots(quads, 2)
    assert [len(g) for g in snaps] == [len(groups[0]), len(groups[1])]
    assert sum(len(g) for g in snaps) == len(set(quads))


def test_snapshot_indexes_are_consistent():
    g = SnapshotGraph(0, [(0, 1, 2), (0, 0, 3), (4, 1, 0), (0, 1, 2)])
    assert len(g) == 3
    assert g.neighbor_index == {0: ((0, 3), (1, 2)), 4: ((1, 0),)}
    assert g.entity_set == frozenset({0, 2, 3, 4})
    assert set(g.reversed().edges) == {(2, 1, 0), (3, 0, 0), (0, 1, 4)}
    for s, nbrs in g.neighbor_index.items():
        assert nbrs, "every indexed entity has an edge"


def test_split_boundaries_examples():
    assert split_boundaries(10) == (8, 9)
    b1, b2 = split_boundaries(189)
    assert b1 == 151 and b2 == 170
    with pytest.raises(DataError):
        split_boundaries(2)
    with pytest.raises(DataError):
        split_boundaries(10, (0.5, 0.2, 0.2))


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 500), st.sampled_from([(0.8, 0.1, 0.1), (0.7, 0.15, 0.15), (0.6, 0.2, 0.2)]))
def test_split_boundaries_brute_force(n, ratios):
    # brute force: count timestamps t with (t + 1) / n <= cumulative ratio, in integer arithmetic
    num = [round(x * 100) for x in ratios]
    b1 = sum(1 for t in range(n) if (t + 1) * 100 <= num[0] * n)
    b2 = sum(1 for t in range(n) if (t + 1) * 100 <= (num[0] + num[1]) * n)
    assert split_boundaries(n, ratios) == (b1, b2)


def test_chronological_split_is_disjoint():
    quads = [Quadruple(t % 3, 0, (t + 1) % 3, t) for t in range(10)]
    split = chronological_split(build_snapshots(quads, 10))
    assert split.boundaries == (8, 9)
    assert {q.t for q in split.train} == set(range(8))
    assert {q.t for q in split.valid} == {8} and {q.t for q in split.test} == {9}
    assert sorted(split.all) == sorted(quads)


def test_filter_examples():
    f = build_filter([Quadruple(0, 1, 2, 3)])
    assert list(f.objects) == [(0, 1, 3)] and list(f.subjects) == [(2, 1, 3)]
    f = build_filter([Quadruple(0, 1, 2, 3)] * 2)
    assert f.known_objects(0, 1, 3) == {2}
    assert f.known_objects(0, 1) == {2} and f.known_subjects(2, 1) == {0}
    assert f.known_objects(5, 0) == set()


def test_filter_vs_brute_force():
    r = random.Random(1)
    quads = [Quadruple(r.randrange(5), r.randrange(2), r.randrange(5), r.randrange(3)) for _ in range(20)]
    f = build_filter(quads)
    for s in range(5):
        for rel in range(2):
            for t in range(3):
                assert f.known_objects(s, rel, t) == {q.o for q in quads if (q.s, q.r, q.t) == (s, rel, t)}
                assert f.known_subjects(s, rel, t) == {q.s for q in quads if (q.o, q.r, q.t) == (s, rel, t)}
            assert f.known_objects(s, rel) == {q.o for q in quads if (q.s, q.r) == (s, rel)}
    for q in quads:
        assert q.o in f.known_objects(q.s, q.r, q.t)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 2), st.integers(0, 6), st.integers(0, 4)),
                max_size=40))
def test_snapshot_flatten_is_permutation_of_deduplicated_input(rows):
    quads = [Quadruple(*r) for r in rows]
    assert sorted(flatten(build_snapshots(quads, 5))) == sorted(set(quads))


def test_load_directory_and_round_trip(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    write(d / "train.txt", ["0\t0\t1\t10", "1\t0\t2\t11"])
    write(d / "valid.txt", ["2\t1\t0\t12"])
    write(d / "test.txt", ["0\t1\t2\t13"])
    ds = load_directory(d)
    assert ds.summary() == {"entities": 3, "relations": 2, "train": 2, "valid": 1, "test": 1, "timestamps": 4}
    assert ds.boundaries == (2, 3)
    out = tmp_path / "copy"
    write_split_files(ds, out)
    again = load_directory(out)
    assert (again.train, again.valid, again.test) == (ds.train, ds.valid, ds.test)


def test_load_directory_single_file_and_errors(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    with pytest.raises(DataError, match="no train"):
        load_directory(d)
    with pytest.raises(DataError, match="does not exist"):
        load_directory(tmp_path / "missing")
    write(d / "data.txt", [f"{t % 4}\t0\t{(t + 1) % 4}\t{t}" for t in range(10)])
    ds = load_directory(d)
    assert (len(ds.train), len(ds.valid), len(ds.test)) == (8, 1, 1)
    e = tmp_path / "empty"
    e.mkdir()
    write(e / "data.txt", [])
    with pytest.raises(DataError):
        load_directory(e)


def test_dataset_check_rejects_shared_timestamps():
    ds = TKGDataset(3, 1, 2, [Quadruple(0, 0, 1, 0)], [Quadruple(0, 0, 2, 0)], [])
    with pytest.raises(DataError, match="share"):
        ds.check()
    with pytest.raises(DataError, match="out of range"):
        TKGDataset(2, 1, 1, [Quadruple(0, 0, 5, 0)], [], []).check()
