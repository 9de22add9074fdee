"""Filtered ranking metrics and multi-step future inference."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .curvature import khs
from .graphdata import FilterSet, Quadruple, SnapshotGraph, TKGDataset
from .model import HistoryState, ModelState, Network

HITS_AT = (1, 3, 10)
HISTORY_MODES = ("sampled", "oracle")
FILTER_MODES = ("any", "time", "raw")


class Direction(enum.Enum):
    OBJECT = "object"
    SUBJECT = "subject"


@dataclass(frozen=True)
class RankResult:
    quad: Quadruple
    rank: float
    direction: Direction


@dataclass
class EvalReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int
    ranks: list[RankResult] = field(default_factory=list, repr=False)

    def metrics(self) -> dict[str, float]:
        return {"mrr": self.mrr, "hits@1": self.hits1, "hits@3": self.hits3,
                "hits@10": self.hits10, "count": self.count}

    def to_tsv(self) -> str:
        lines = ["metric\tvalue"]
        for k, v in self.metrics().items():
            lines.append(f"{k}\t{v}" if k == "count" else f"{k}\t{v:.6f}")
        return "\n".join(lines) + "\n"

    def rank_dump(self) -> str:
        lines = ["s\tr\to\tt\tdirection\trank"]
        for rr in self.ranks:
            s, r, o, t = rr.quad
            lines.append(f"{s}\t{r}\t{o}\t{t}\t{rr.direction.value}\t{rr.rank:g}")
        return "\n".join(lines) + "\n"


def rank_filtered(scores, true_id: int, filter: Iterable[int] = ()) -> float:
    """1 + #unfiltered candidates scoring higher + half the unfiltered ties."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= true_id < scores.shape[0]:
        raise IndexError(f"true id {true_id} out of range")
    keep = np.ones(scores.shape[0], dtype=bool)
    drop = [j for j in filter if 0 <= j < scores.shape[0]]
    keep[drop] = False
    keep[true_id] = False
    others = scores[keep]
    target = scores[true_id]
    higher = int(np.count_nonzero(others > target))
    ties = int(np.count_nonzero(others == target))
    return 1.0 + higher + 0.5 * ties


def report_from_ranks(ranks: Sequence[RankResult]) -> EvalReport:
    n = len(ranks)
    if n == 0:
        return EvalReport(math.nan, math.nan, math.nan, math.nan, 0, [])
    values = [rr.rank for rr in ranks]
    mrr = math.fsum(1.0 / v for v in values) / n
    hits = [sum(1 for v in values if v <= k) / n for k in HITS_AT]
    return EvalReport(mrr, *hits, n, list(ranks))


def _split_range(dataset: TKGDataset, split: str) -> tuple[int, int]:
    b1, b2 = dataset.boundaries
    ranges = {"train": (0, b1), "valid": (b1, b2), "test": (b2, dataset.num_times)}
    if split not in ranges:
        raise ValueError(f"unknown split {split!r}")
    return ranges[split]


def _known(filt: FilterSet | None, mode: str, direction: Direction, q: Quadruple) -> set[int]:
    if filt is None or mode == "raw":
        return set()
    t = q.t if mode == "time" else None
    if direction is Direction.OBJECT:
        return filt.known_objects(q.s, q.r, t)
    return filt.known_subjects(q.o, q.r, t)


def score_timestamp(net: Network, quads: Sequence[Quadruple], fwd: HistoryState,
                    inv: HistoryState) -> tuple[np.ndarray, np.ndarray]:
    """Object scores (per row, over entities) and subject scores for ``quads``."""
    q = np.asarray([tuple(x)[:3] for x in quads], dtype=np.int64).reshape(-1, 3)
    obj = np.asarray(net.object_logits(q[:, 0], q[:, 1], fwd))
    subj = np.asarray(net.object_logits(q[:, 2], q[:, 1], inv))
    return obj, subj


def rank_timestamp(net, quads, fwd, inv, filt, filter_mode="any") -> list[RankResult]:
    obj, subj = score_timestamp(net, quads, fwd, inv)
    out = []
    for i, q in enumerate(quads):
        out.append(RankResult(q, rank_filtered(obj[i], q.o, _known(filt, filter_mode, Direction.OBJECT, q)),
                              Direction.OBJECT))
        out.append(RankResult(q, rank_filtered(subj[i], q.s, _known(filt, filter_mode, Direction.SUBJECT, q)),
                              Direction.SUBJECT))
    return out


# --------------------------------------------------------------------------
# sampling


def _draw(prob: np.ndarray, u: np.ndarray | None) -> np.ndarray:
    """Inverse-CDF draws per row of ``prob`` (argmax rows when ``u`` is None)."""
    if u is None:
        return np.argmax(prob, axis=-1)
    cdf = np.cumsum(prob, axis=-1)
    idx = (cdf < (u * cdf[..., -1])[..., None]).sum(axis=-1)
    return np.minimum(idx, prob.shape[-1] - 1)


def _probs(logits, temperature):
    logits = np.asarray(logits, dtype=np.float64)
    if temperature == 0:
        return logits
    return np.asarray(ad.softmax(logits / temperature, axis=-1))


def sample_snapshot(net: Network, fwd: HistoryState, t: int, budget: int,
                    rng: np.random.Generator, temperature: float = 1.0) -> SnapshotGraph:
    """Draw ``budget`` facts s ~ p(s|G), r ~ p(r|s), o ~ p(o|s,r) for timestamp ``t``.

    ``temperature = 0`` takes the argmax at every stage.
    """
    if budget < 0 or temperature < 0:
        raise ValueError("budget and temperature must be nonnegative")
    if budget == 0:
        return SnapshotGraph(t)
    greedy = temperature == 0

    def uniforms():
        return None if greedy else rng.random(budget)

    ps = _probs(net.subject_logits(fwd), temperature)
    s = _draw(np.broadcast_to(ps, (budget, ps.shape[-1])), uniforms())
    r = _draw(_probs(net.relation_logits(s, fwd), temperature), uniforms())
    o = _draw(_probs(net.object_logits(s, r, fwd), temperature), uniforms())
    return SnapshotGraph(t, zip(s.tolist(), r.tolist(), o.tolist()))


@dataclass
class SampleResult:
    snapshots: list[SnapshotGraph]
    forward: HistoryState
    inverse: HistoryState


def _window(net: Network, seq: Sequence[SnapshotGraph], khs_seq: Sequence[float], end: int):
    lo = max(0, end - net.cfg.window)
    snaps, ks = seq[lo:end], khs_seq[lo:end]
    return net.replay(snaps, ks), net.replay(snaps, ks, inverse=True)


def multi_step_sample(state: ModelState, context: Sequence[SnapshotGraph], horizon: int,
                      budget: int, seed: int = 0, temperature: float = 1.0) -> SampleResult:
    """Sample ``horizon`` future snapshots after ``context`` (ground truth, dense in t).

    Each sampled snapshot is appended to the sequence before the next step;
    sampled snapshots reuse the last observed hierarchy score.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    net = Network(state.config, state.params)
    seq = list(context)
    khs_seq = [khs(g) for g in seq]
    last = khs_seq[-1] if khs_seq else 0.0
    t0 = seq[-1].t + 1 if seq else 0
    sampled = []
    for k in range(horizon):
        fwd, _ = _window(net, seq, khs_seq, len(seq))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5A3, t0 + k])))
        g = sample_snapshot(net, fwd, t0 + k, budget, rng, temperature)
        sampled.append(g)
        seq.append(g)
        khs_seq.append(last)
    fwd, inv = _window(net, seq, khs_seq, len(seq))
    return SampleResult(sampled, fwd, inv)


def default_budget(dataset: TKGDataset) -> int:
    b1, _ = dataset.boundaries
    train = dataset.snapshots[:b1]
    return int(round(sum(len(g) for g in train) / len(train))) if train else 0


def evaluate(state: ModelState, dataset: TKGDataset, split: str = "test",
             history: str = "sampled", seed: int = 0, temperature: float = 1.0,
             budget: int | None = None, filter_mode: str = "any") -> EvalReport:
    """Filtered MRR and Hits@k over both prediction directions of ``split``.

    ``history="oracle"`` conditions every timestamp on ground-truth snapshots.
    ``"sampled"`` uses ground truth before the split and sampled snapshots
    inside it.
    """
    if history not in HISTORY_MODES:
        raise ValueError(f"history must be one of {HISTORY_MODES}")
    if filter_mode not in FILTER_MODES:
        raise ValueError(f"filter_mode must be one of {FILTER_MODES}")
    start, end = _split_range(dataset, split)
    net = Network(state.config, state.params)
    truth = dataset.snapshots
    filt = dataset.filter
    if budget is None:
        budget = default_budget(dataset)
    truth_khs = [khs(g) for g in truth[:end]]
    if history == "oracle":
        seq, khs_seq = truth, truth_khs
    else:
        seq, khs_seq = list(truth[:start]), truth_khs[:start]
    last = truth_khs[start - 1] if start > 0 else 0.0
    ranks: list[RankResult] = []
    for t in range(start, end):
        fwd, inv = _window(net, seq, khs_seq, t)
        quads = [Quadruple(s, r, o, t) for s, r, o in truth[t].edges]
        if quads:
            ranks.extend(rank_timestamp(net, quads, fwd, inv, filt, filter_mode))
        if history == "sampled" and t + 1 < end:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5A3, t])))
            seq.append(sample_snapshot(net, fwd, t, budget, rng, temperature))
            khs_seq.append(last)
    return report_from_ranks(ranks)
