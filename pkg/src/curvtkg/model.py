"""Autoregressive global/local hyperbolic representations and probability heads.

The global state H_t lives at the learnable curvature ``global_c``; local
states h_t(s) and h_t(s, r) live at the per-timestamp curvature c_t. Every
change of curvature goes through the tangent space at the origin, so states
are stored as their tangent coordinates ``drop(h)``: re-curving a state to a
new curvature is then exactly ``lift(v, c_new)``.

Facts are scored in two directions. The forward direction predicts objects
from (s, r); the inverse direction runs the same recurrences on reversed
snapshots and predicts subjects from (o, r) with its own classifier weights.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .curvature import CurvatureSchedule, ScheduleKind, global_curvature, schedule_eval, UNIT_RAW
from .geometry import HPoint, Model, points
from .geometry.manifolds import get_backend
from .graphdata import Quadruple, SnapshotGraph

EMBED_CURVATURE = -1.0
SCHEDULE_PREFIX = "sched_"


class NumericalError(FloatingPointError):
    """Non-finite values in the forward pass."""


@dataclass
class ModelConfig:
    num_entities: int
    num_relations: int
    dim: int = 200
    window: int = 10
    lam: float = 0.01
    subject_weight: float = 0.01
    backend: str = "poincare"
    schedule: str = "timeseries"
    poly_degree: int = 1
    attention_heads: int = 1
    attention_slope: float = 0.2
    init_scale: float = 0.1

    def __post_init__(self):
        if self.dim <= 0 or self.window <= 0:
            raise ValueError("dim and window must be positive")
        if self.lam < 0 or self.subject_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.attention_heads != 1:
            raise ValueError("only single-head attention is implemented")
        get_backend(self.backend)
        ScheduleKind(self.schedule)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelState:
    """All learnable parameters plus the configuration that shapes them."""

    config: ModelConfig
    params: dict[str, np.ndarray]

    def copy(self) -> "ModelState":
        return ModelState(replace(self.config), {k: v.copy() for k, v in self.params.items()})

    @property
    def schedule(self) -> CurvatureSchedule:
        return CurvatureSchedule(ScheduleKind(self.config.schedule), schedule_params(self.params))

    @property
    def global_c(self) -> float:
        return global_curvature(self.params["global_c"])

    def check_finite(self) -> None:
        for name, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise NumericalError(f"parameter {name} has non-finite entries")


def schedule_params(params: Mapping) -> dict:
    n = len(SCHEDULE_PREFIX)
    return {k[n:]: v for k, v in params.items() if k.startswith(SCHEDULE_PREFIX)}


def param_groups(names) -> dict[str, list[str]]:
    """Parameter names bucketed by role (used for gradient reports)."""
    groups: dict[str, list[str]] = {}
    for name in names:
        if name in ("ent_emb", "rel_emb"):
            g = "embeddings"
        elif name.startswith("agg_"):
            g = "aggregator"
        elif name.startswith("rnn"):
            g = "rnn"
        elif name.startswith("w_"):
            g = "classifiers"
        elif name.startswith(SCHEDULE_PREFIX):
            g = "schedule"
        else:
            g = name
        groups.setdefault(g, []).append(name)
    return groups


def init_state(config: ModelConfig, seed: int = 0) -> ModelState:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x1417])))
    d, ne, nr = config.dim, config.num_entities, config.num_relations
    pd = get_backend(config.backend).point_dim(d)

    def normal(shape, std):
        return rng.normal(0.0, std, size=shape)

    p = {
        "ent_emb": normal((ne, d), config.init_scale),
        "rel_emb": normal((nr, d), config.init_scale),
        "agg_nbr": normal((d, 2 * d), np.sqrt(1.0 / (2 * d))),
        "agg_self": normal((d, d), np.sqrt(1.0 / d)),
        "agg_attn": normal((2 * d,), np.sqrt(1.0 / (2 * d))),
    }
    cells = {"rnn1": ("U",), "rnn2": ("Ua", "Ug"), "rnn3": ("Ua", "Ug")}
    for cell, inputs in cells.items():
        p[f"{cell}_W"] = normal((d, d), np.sqrt(1.0 / d))
        for u in inputs:
            p[f"{cell}_{u}"] = normal((d, d), np.sqrt(1.0 / d))
        p[f"{cell}_b"] = np.zeros(d)
    p["w_s"] = normal((d, ne), np.sqrt(1.0 / d))
    for suffix in ("", "_inv"):
        p["w_r" + suffix] = normal((2 * pd, nr), np.sqrt(1.0 / (2 * pd)))
        p["w_o" + suffix] = normal((3 * pd, ne), np.sqrt(1.0 / (3 * pd)))
    p["global_c"] = np.array(UNIT_RAW)
    sched = CurvatureSchedule.initial(config.schedule, config.poly_degree)
    for k, v in sched.params.items():
        p[SCHEDULE_PREFIX + k] = np.array(v, dtype=np.float64)
    return ModelState(config, p)


# --------------------------------------------------------------------------
# history


@dataclass
class HistoryState:
    """Recurrent state after consuming the snapshot at ``t``.

    ``H`` (shape d), ``h_s`` and ``h_sr`` (one row per key) are tangent
    coordinates at the origin. The corresponding points are
    lift(H, c_global) and lift(h, c_t); keys absent from the index are the
    origin.
    """

    dim: int
    backend: str = "poincare"
    inverse: bool = False
    t: int = -1
    c_global: object = -1.0
    c_t: object = -1.0
    khs_last: float = 0.0
    H: object = None
    h_s: object = None
    h_sr: object = None
    s_index: dict = field(default_factory=dict)
    sr_index: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.H is None:
            self.H = np.zeros(self.dim)
        if self.h_s is None:
            self.h_s = np.zeros((0, self.dim))
        if self.h_sr is None:
            self.h_sr = np.zeros((0, self.dim))

    def _model(self) -> Model:
        return get_backend(self.backend).model

    def global_point(self) -> HPoint:
        c = float(ad.value(self.c_global))
        return points.lift(ad.value(self.H), c, self._model())

    def entity_point(self, s: int) -> HPoint:
        c = float(ad.value(self.c_t))
        row = self.s_index.get(s)
        v = np.zeros(self.dim) if row is None else ad.value(self.h_s)[row]
        return points.lift(v, c, self._model())

    def pair_point(self, s: int, r: int) -> HPoint:
        c = float(ad.value(self.c_t))
        row = self.sr_index.get((s, r))
        v = np.zeros(self.dim) if row is None else ad.value(self.h_sr)[row]
        return points.lift(v, c, self._model())


def _rows(index: dict, keys) -> np.ndarray:
    """Row of each key; missing keys map to len(index) (the zero pad row)."""
    n = len(index)
    return np.fromiter((index.get(k, n) for k in keys), dtype=np.int64, count=len(keys))


def _padded(table, dim):
    return ad.concat([table, np.zeros((1, dim))], axis=0)


def _extend(table, index: dict, keys, dim):
    """Add zero rows for unseen keys; returns (table, new index, rows of keys)."""
    new = [k for k in dict.fromkeys(keys) if k not in index]
    if new:
        index = dict(index)
        for k in new:
            index[k] = len(index)
        table = ad.concat([table, np.zeros((len(new), dim))], axis=0)
    return table, index, _rows(index, keys)


# --------------------------------------------------------------------------
# network


class Network:
    """Forward computations over a parameter mapping (arrays or tape variables)."""

    def __init__(self, config: ModelConfig, params: Mapping, debug: bool = False):
        self.cfg = config
        self.p = params
        self.man = get_backend(config.backend)
        self.kind = ScheduleKind(config.schedule)
        self.debug = debug

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def global_c(self):
        return global_curvature(self.p["global_c"])

    def local_c(self, t: int, khs_t: float):
        return schedule_eval(self.kind, schedule_params(self.p), t, khs_t)

    def _check(self, x, c, what):
        if not self.debug:
            return
        xv, cv = np.asarray(ad.value(x)), float(ad.value(c))
        if not np.all(np.isfinite(xv)):
            raise NumericalError(f"{what}: non-finite coordinates")
        rows = xv.reshape(-1, xv.shape[-1])
        for row in rows:
            viol = points.invariant_violation(HPoint(self.man.model, cv, row))
            if viol > points.EPS_LORENTZ:
                raise NumericalError(f"{what}: point off the manifold (violation {viol:.2e})")

    # -- neighbourhood aggregation ------------------------------------------

    def aggregate_all(self, snapshot: SnapshotGraph):
        """Attention aggregates for every subject of ``snapshot``.

        Returns (subjects, rows): sorted subject ids and their aggregated
        neighbourhood vectors (Euclidean, one row per subject).
        """
        s, r, o = snapshot.arrays
        d = self.dim
        if len(s) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros((0, d))
        subj, seg = np.unique(s, return_inverse=True)
        ent, rel = self.p["ent_emb"], self.p["rel_emb"]
        msg = ad.concat([ad.take(rel, r), ad.take(ent, o)], axis=1) @ ad.transpose(self.p["agg_nbr"])
        query = ad.take(ent, subj) @ ad.transpose(self.p["agg_self"])
        attn = self.p["agg_attn"]
        score = ad.take(query @ attn[:d], seg) + msg @ attn[d:]
        score = ad.leaky_relu(score, self.cfg.attention_slope)
        sv = ad.value(score)
        shift = np.full(len(subj), -np.inf)
        np.maximum.at(shift, seg, sv)
        ex = ad.exp(score - shift[seg])
        alpha = ex / ad.take(ad.segment_sum(ex, seg, len(subj)), seg)
        rows = ad.segment_sum(ad.reshape(alpha, (len(s), 1)) * msg, seg, len(subj))
        return subj, rows

    def pool(self, agg_rows):
        if ad.value(agg_rows).shape[0] == 0:
            return np.zeros(self.dim)
        return ad.max(agg_rows, axis=0)

    # -- recurrent cells -----------------------------------------------------

    def cell(self, name: str, inputs: Sequence, hidden, c):
        """phi(W (x) hidden (+) U_1 (x) x_1 (+) ... (+) b), returned as tangent coordinates.

        ``inputs`` and ``hidden`` are points at curvature ``c``; phi is tanh in
        the tangent space at the origin, so drop(phi(z)) = tanh(drop(z)).
        """
        man, p = self.man, self.p
        names = ("U",) if name == "rnn1" else ("Ua", "Ug")
        z = man.matvec(p[f"{name}_W"], hidden, c)
        for u, x in zip(names, inputs):
            z = man.add(z, man.matvec(p[f"{name}_{u}"], x, c), c)
        b = ad.reshape(p[f"{name}_b"], (1, self.dim))
        z = man.add(z, man.lift(b, c), c)
        self._check(z, c, name)
        return ad.tanh(man.drop(z, c))

    # -- recurrence -------------------------------------------------------------

    def advance(self, hist: HistoryState, snapshot: SnapshotGraph, khs_t: float) -> HistoryState:
        d, man = self.dim, self.man
        graph = snapshot.reversed() if hist.inverse else snapshot
        c, ct = self.global_c(), self.local_c(snapshot.t, khs_t)
        subj, agg = self.aggregate_all(graph)
        pooled = ad.reshape(self.pool(agg), (1, d))
        H_prev = ad.reshape(hist.H, (1, d))
        H = self.cell("rnn1", [man.lift(pooled, c)], man.lift(H_prev, c), c)
        out = replace(hist, t=snapshot.t, c_global=c, c_t=ct, khs_last=khs_t,
                      H=ad.reshape(H, (d,)))
        if len(subj) == 0:
            return out
        glob = man.lift(ad.take(H, np.zeros(len(subj), dtype=np.int64)), ct)
        x_agg = man.lift(agg, ct)
        h_s, s_index, srows = _extend(hist.h_s, hist.s_index, subj.tolist(), d)
        prev = ad.take(h_s, srows)
        new_s = self.cell("rnn2", [x_agg, glob], man.lift(prev, ct), ct)
        out.h_s, out.s_index = ad.set_rows(h_s, srows, new_s), s_index

        pairs = graph.subject_relation_pairs
        pair_subj = np.searchsorted(subj, np.fromiter((p[0] for p in pairs), dtype=np.int64))
        h_sr, sr_index, prows = _extend(hist.h_sr, hist.sr_index, pairs, d)
        prev = ad.take(h_sr, prows)
        x_agg_p = man.lift(ad.take(agg, pair_subj), ct)
        glob_p = man.lift(ad.take(H, np.zeros(len(pairs), dtype=np.int64)), ct)
        new_sr = self.cell("rnn3", [x_agg_p, glob_p], man.lift(prev, ct), ct)
        out.h_sr, out.sr_index = ad.set_rows(h_sr, prows, new_sr), sr_index
        return out

    def replay(self, snapshots: Sequence[SnapshotGraph], khs_values: Sequence[float],
               inverse: bool = False) -> HistoryState:
        """History after consuming ``snapshots`` in order, starting from the origin."""
        hist = HistoryState(dim=self.dim, backend=self.cfg.backend, inverse=inverse)
        for g, k in zip(snapshots, khs_values):
            hist = self.advance(hist, g, k)
        return hist

    # -- heads ------------------------------------------------------------------

    def _embed(self, table, ids):
        return self.man.lift(ad.take(self.p[table], ids), EMBED_CURVATURE)

    def object_logits(self, s_ids, r_ids, hist: HistoryState):
        """Logits of p(o | s, r) for each (s, r) row (inverse histories score subjects)."""
        s_ids = np.asarray(s_ids, dtype=np.int64)
        r_ids = np.asarray(r_ids, dtype=np.int64)
        keys = list(zip(s_ids.tolist(), r_ids.tolist()))
        h = ad.take(_padded(hist.h_sr, self.dim), _rows(hist.sr_index, keys))
        feats = ad.concat([self._embed("ent_emb", s_ids), self._embed("rel_emb", r_ids),
                           self.man.lift(h, EMBED_CURVATURE)], axis=1)
        return feats @ self.p["w_o_inv" if hist.inverse else "w_o"]

    def relation_logits(self, s_ids, hist: HistoryState):
        s_ids = np.asarray(s_ids, dtype=np.int64)
        h = ad.take(_padded(hist.h_s, self.dim), _rows(hist.s_index, s_ids.tolist()))
        feats = ad.concat([self._embed("ent_emb", s_ids), self.man.lift(h, EMBED_CURVATURE)], axis=1)
        return feats @ self.p["w_r_inv" if hist.inverse else "w_r"]

    def subject_logits(self, hist: HistoryState):
        return hist.H @ self.p["w_s"]

    def direction_loss(self, quads: Sequence[Quadruple], hist: HistoryState):
        """-sum [log p(o | s, r) + lam log p(r | s)] with roles swapped for inverse histories."""
        q = np.asarray([tuple(x)[:3] for x in quads], dtype=np.int64).reshape(-1, 3)
        s, r, o = (q[:, 2], q[:, 1], q[:, 0]) if hist.inverse else (q[:, 0], q[:, 1], q[:, 2])
        rows = np.arange(len(q))
        lp_o = ad.log_softmax(self.object_logits(s, r, hist), axis=1)[rows, o]
        lp_r = ad.log_softmax(self.relation_logits(s, hist), axis=1)[rows, r]
        return ad.neg(ad.sum(lp_o + self.cfg.lam * lp_r))

    def subject_loss(self, quads: Sequence[Quadruple], hist: HistoryState):
        s = np.asarray([x[0] for x in quads], dtype=np.int64)
        return ad.neg(ad.sum(ad.log_softmax(self.subject_logits(hist))[s]))

    def objective(self, quads: Sequence[Quadruple], fwd: HistoryState, inv: HistoryState):
        """Training objective summed over ``quads``: both directions plus the
        subject-distribution term weighted by ``subject_weight``."""
        total = self.direction_loss(quads, fwd) + self.direction_loss(quads, inv)
        if self.cfg.subject_weight:
            total = total + self.cfg.subject_weight * self.subject_loss(quads, fwd)
        return total


# --------------------------------------------------------------------------
# public single-query API over a ModelState


def window_khs(snapshots: Sequence[SnapshotGraph], known: Sequence[bool] | None = None,
               initial: float = 0.0) -> list[float]:
    """Hierarchy scores for a snapshot window; unknown (future) snapshots reuse
    the last known score."""
    from .curvature import khs

    out, last = [], initial
    for i, g in enumerate(snapshots):
        if known is None or known[i]:
            last = khs(g)
        out.append(last)
    return out


def histories(state: ModelState, snapshots: Sequence[SnapshotGraph],
              khs_values: Sequence[float] | None = None) -> tuple[HistoryState, HistoryState]:
    """Forward and inverse histories over the last ``window`` snapshots."""
    window = list(snapshots)[-state.config.window:]
    if khs_values is None:
        khs_values = window_khs(window)
    else:
        khs_values = list(khs_values)[-len(window):] if window else []
    net = Network(state.config, state.params)
    return net.replay(window, khs_values), net.replay(window, khs_values, inverse=True)


def aggregate(s: int, snapshot: SnapshotGraph, state: ModelState) -> np.ndarray:
    subj, rows = Network(state.config, state.params).aggregate_all(snapshot)
    i = np.searchsorted(subj, s)
    if i < len(subj) and subj[i] == s:
        return np.asarray(rows[i])
    return np.zeros(state.config.dim)


def global_pool(snapshot: SnapshotGraph, state: ModelState) -> np.ndarray:
    net = Network(state.config, state.params)
    return np.asarray(net.pool(net.aggregate_all(snapshot)[1]))


def hrnn_step(cell: Mapping, inputs: Sequence[HPoint], hidden: HPoint) -> HPoint:
    """One hyperbolic RNN step phi(W (x) h (+) U_1 (x) x_1 (+) ... (+) b) on points.

    ``cell`` maps "W" to a matrix, "U" to a list of matrices (one per input)
    and "b" to a point (HPoint) or its tangent coordinates at the origin.
    """
    c, model = hidden.curvature, hidden.model
    for x in inputs:
        if x.curvature != c or x.model is not model:
            raise points.GeometryError("hrnn_step operands must share model and curvature")
        points.check_point(x)
    points.check_point(hidden)
    man = get_backend(model.value)
    us = list(cell["U"])
    if len(us) != len(inputs):
        raise ValueError("need one input matrix per input")
    b = cell["b"]
    if isinstance(b, HPoint):
        if b.curvature != c or b.model is not model:
            raise points.GeometryError("bias must share model and curvature")
        b_pt = b.coords
    else:
        b_pt = man.lift(np.asarray(b, dtype=np.float64), c)
    z = man.matvec(np.asarray(cell["W"]), hidden.coords, c)
    for u, x in zip(us, inputs):
        z = man.add(z, man.matvec(np.asarray(u), x.coords, c), c)
    z = man.add(z, b_pt, c)
    return HPoint(model, c, man.lift(np.tanh(man.drop(z, c)), c))


def advance(state: ModelState, history: HistoryState, snapshot: SnapshotGraph,
            khs_t: float | None = None) -> HistoryState:
    from .curvature import khs

    if khs_t is None:
        khs_t = khs(snapshot)
    return Network(state.config, state.params).advance(history, snapshot, khs_t)


def _check_ids(state: ModelState, entity=None, relation=None):
    if entity is not None and not 0 <= entity < state.config.num_entities:
        raise KeyError(f"unknown entity id {entity}")
    if relation is not None and not 0 <= relation < state.config.num_relations:
        raise KeyError(f"unknown relation id {relation}")


def prob_object(s: int, r: int, history: HistoryState, state: ModelState) -> np.ndarray:
    _check_ids(state, s, r)
    logits = Network(state.config, state.params).object_logits([s], [r], history)
    return ad.softmax(logits, axis=1)[0]


def prob_relation(s: int, history: HistoryState, state: ModelState) -> np.ndarray:
    _check_ids(state, s)
    logits = Network(state.config, state.params).relation_logits([s], history)
    return ad.softmax(logits, axis=1)[0]


def prob_subject(history: HistoryState, state: ModelState) -> np.ndarray:
    return ad.softmax(Network(state.config, state.params).subject_logits(history))


def loss(batch: Sequence[Quadruple], history: HistoryState, state: ModelState) -> float:
    """-sum over ``batch`` of log p(o|s,r) + lam log p(r|s) (roles swapped for inverse histories)."""
    value = float(Network(state.config, state.params).direction_loss(batch, history))
    if not np.isfinite(value):
        raise NumericalError("non-finite loss")
    return value
