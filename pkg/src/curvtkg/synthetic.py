"""Synthetic hierarchical temporal knowledge graphs (tree-growth process)."""

from __future__ import annotations

import numpy as np

from .graphdata import SnapshotGraph, TKGDataset, chronological_split


def hierarchical_tkg(num_entities: int = 50, num_relations: int = 4, num_times: int = 30,
                     initial: int = 20, keep: float = 0.9, noise: float = 0.3,
                     seed: int = 0, ratios=(0.8, 0.1, 0.1)) -> TKGDataset:
    """A growing tree observed through noisy snapshots.

    Entity 0 is the root and the first ``initial`` entities form a random
    tree at t = 0. The remaining entities join one parent each, spread
    evenly over the remaining timestamps. Each child carries a fixed relation
    label. Every tree edge (parent, rel, child) appears in a snapshot with
    probability ``keep``. With probability ``noise`` a snapshot also gets a
    single reversed edge (child, rel, parent), which lowers its hierarchy
    score slightly below 1.
    """
    if not 1 <= initial <= num_entities:
        raise ValueError("initial must be in [1, num_entities]")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x7EE])))
    parent = {}
    label = {}
    join_time = {}

    def attach(child, t):
        # shallow-biased parent choice keeps a few hubs and some depth
        cands = np.arange(child)
        weights = 1.0 / (1.0 + cands)
        parent[child] = int(rng.choice(cands, p=weights / weights.sum()))
        label[child] = int(rng.integers(num_relations))
        join_time[child] = t

    for child in range(1, initial):
        attach(child, 0)
    later = list(range(initial, num_entities))
    steps = max(num_times - 1, 1)
    for k, child in enumerate(later):
        attach(child, 1 + (k * steps) // max(len(later), 1))

    snapshots = []
    for t in range(num_times):
        alive = [c for c in sorted(parent) if join_time[c] <= t]
        edges = []
        for c in alive:
            # a node is always visible in the snapshot where it joins
            if join_time[c] == t or rng.random() < keep:
                edges.append((parent[c], label[c], c))
        if alive and rng.random() < noise:
            c = alive[int(rng.integers(len(alive)))]
            edges.append((c, label[c], parent[c]))
        snapshots.append(SnapshotGraph(t, edges))
    split = chronological_split(snapshots, ratios)
    return TKGDataset(num_entities, num_relations, num_times,
                      split.train, split.valid, split.test, name="synthetic-tree")


def tree_snapshot(t: int, depth: int = 3, branching: int = 2) -> SnapshotGraph:
    """A complete directed tree (hierarchy score exactly 1)."""
    edges, frontier, nxt = [], [0], 1
    for _ in range(depth):
        new = []
        for p in frontier:
            for _ in range(branching):
                edges.append((p, 0, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    return SnapshotGraph(t, edges)


def reciprocal_snapshot(t: int, n: int = 5) -> SnapshotGraph:
    """Every ordered pair of ``n`` entities connected (hierarchy score exactly 0)."""
    return SnapshotGraph(t, [(i, 0, j) for i in range(n) for j in range(n) if i != j])
