"""Exhaustive reference scorers shared by the unit and acceptance tests."""

import math
import random
from fractions import Fraction

import numpy as np

from curvtkg.graphdata import Quadruple, TKGDataset
from curvtkg.model import init_state, prob_object
from curvtkg.training import TrainConfig


def brute_khs(edges, n):
    """Adjacency-matrix enumeration in rational arithmetic."""
    R = [[0] * n for _ in range(n)]
    for e in edges:
        R[e[0]][e[-1]] = 1
    num = sum(R[i][j] * (1 - R[j][i]) for i in range(n) for j in range(n))
    den = sum(R[i][j] for i in range(n) for j in range(n))
    return Fraction(num, den) if den else Fraction(0)


def brute_rank(scores, true_id, known):
    higher = ties = 0
    for j, v in enumerate(scores):
        if j == true_id or j in known:
            continue
        higher += v > scores[true_id]
        ties += v == scores[true_id]
    return 1 + higher + ties / 2


def toy_dataset():
    """20 quads: 14 training facts over t=0..2, then 3 validation and 3 test facts."""
    r = random.Random(2)
    quads: set = set()
    for t, n in ((0, 5), (1, 5), (2, 4), (3, 3), (4, 3)):
        part: set = set()
        while len(part) < n:
            part.add(Quadruple(r.randrange(5), r.randrange(2), r.randrange(5), t))
        quads |= part
    quads = sorted(quads, key=lambda q: (q.t, q))
    assert len(quads) == 20
    return TKGDataset(5, 2, 5, [q for q in quads if q.t < 3], [q for q in quads if q.t == 3],
                      [q for q in quads if q.t == 4])


def toy_model(backend="poincare"):
    cfg = TrainConfig(dim=4, window=2, backend=backend)
    st_ = init_state(cfg.model_config(5, 2), 1)
    r = np.random.default_rng(1)
    st_.params = {k: v + r.normal(0, 0.5, v.shape) for k, v in st_.params.items()}
    return st_


def brute_evaluate(state, ds, split, history_for):
    every = ds.train + ds.valid + ds.test
    quads = {"valid": ds.valid, "test": ds.test}[split]
    ranks = []
    for q in quads:
        fwd, inv = history_for(q.t)
        po = prob_object(q.s, q.r, fwd, state)
        known = {x.o for x in every if (x.s, x.r) == (q.s, q.r)}
        ranks.append(brute_rank(list(po), q.o, known))
        ps = prob_object(q.o, q.r, inv, state)
        known = {x.s for x in every if (x.o, x.r) == (q.o, q.r)}
        ranks.append(brute_rank(list(ps), q.s, known))
    n = len(ranks)
    return ranks, math.fsum(1 / v for v in ranks) / n, [sum(v <= k for v in ranks) / n for k in (1, 3, 10)]
