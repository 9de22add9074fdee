"""Windowed autoregressive training with Adam, clipping and checkpoints."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from . import serialization
from .curvature import khs
from .graphdata import SnapshotGraph, TKGDataset
from .model import ModelConfig, ModelState, Network, NumericalError, init_state

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 1024
    epochs: int = 100
    window: int = 10
    lam: float = 0.01
    subject_weight: float = 0.01
    seed: int = 0
    clip_norm: float = 1.0
    schedule: str = "timeseries"
    backend: str = "poincare"
    dim: int = 200
    poly_degree: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_history: str = "sampled"
    val_every: int = 1

    def __post_init__(self):
        # lr = 0 is accepted as a dry run: losses are computed, parameters stay put
        if not self.lr >= 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0 or self.window < 1 or self.val_every < 1:
            raise ValueError("epochs must be nonnegative; window and val_every positive")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")

    def model_config(self, num_entities: int, num_relations: int) -> ModelConfig:
        return ModelConfig(num_entities, num_relations, dim=self.dim, window=self.window,
                           lam=self.lam, subject_weight=self.subject_weight,
                           backend=self.backend, schedule=self.schedule,
                           poly_degree=self.poly_degree)


def _coerce(kind, text: str):
    if kind is bool or kind == "bool":
        return text.lower() in ("1", "true", "yes", "on")
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """``key = value`` lines (``#`` comments) over TrainConfig fields."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    values = asdict(base) if base else {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "m":
            key = "window"
        if key not in types:
            raise ValueError(f"config line {n}: unknown key {key!r}")
        try:
            values[key] = _coerce(types[key], val)
        except ValueError:
            raise ValueError(f"config line {n}: bad value {val!r} for {key}") from None
    return TrainConfig(**values)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(config).items())


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> dict[str, np.ndarray]:
    """One Adam update; moments in ``state`` are updated in place."""
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        if state.m[k].shape != p.shape:
            raise ValueError(f"moment shape mismatch for {k}")
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float):
    """Rescale so the global norm is at most ``max_norm``; returns (grads, norm before)."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return dict(grads), norm


# --------------------------------------------------------------------------
# epochs


def batch_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, epoch, index])))


def _check_curvatures(state: ModelState, snapshots, khs_values):
    if not state.global_c < 0:
        raise NumericalError(f"global curvature left the negative range: {state.global_c}")
    sched = state.schedule
    for g, k in zip(snapshots, khs_values):
        c = sched.evaluate(g.t, k)
        if not c < 0:
            raise NumericalError(f"schedule curvature at t={g.t} is {c}")


@dataclass
class EpochResult:
    state: ModelState
    loss: float
    steps: int


def train_epoch(state: ModelState, snapshots: list[SnapshotGraph], config: TrainConfig,
                adam: AdamState | None = None, epoch: int = 0) -> EpochResult:
    """One pass over the training timestamps in chronological order.

    For each target timestamp t the model replays the window G[t-m, t-1]
    from a zero history (gradient horizon = window), then fits the facts of
    G_t in shuffled mini-batches. Returns the mean per-fact loss, each fact's
    loss measured before the update of its batch.
    """
    adam = adam if adam is not None else AdamState.zeros_like(state.params)
    cfg = state.config
    khs_values = [khs(g) for g in snapshots]
    params = dict(state.params)
    count, steps = 0, 0
    losses = []
    for t, target in enumerate(snapshots):
        facts = target.edges
        if not facts:
            continue
        lo = max(0, t - cfg.window)
        window, wk = snapshots[lo:t], khs_values[lo:t]
        order = batch_rng(config.seed, epoch, t).permutation(len(facts))
        for start in range(0, len(facts), config.batch_size):
            idx = order[start:start + config.batch_size]
            quads = [(*facts[i], t) for i in idx]
            tape = ad.Tape()
            leaves = tape.vars(params)
            net = Network(cfg, leaves)
            obj = net.objective(quads, net.replay(window, wk), net.replay(window, wk, inverse=True))
            batch_loss = float(ad.value(obj))
            if not math.isfinite(batch_loss):
                raise NumericalError(f"non-finite loss {batch_loss} at epoch {epoch}, "
                                     f"timestamp {t}, batch starting {start}")
            mean = obj * (1.0 / len(idx))
            tape.backward(mean)
            grads = {k: leaves[k].grad for k in params}
            bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
            if bad:
                raise NumericalError(f"non-finite gradient for {bad} at epoch {epoch}, timestamp {t}")
            grads, _ = clip_by_global_norm(grads, config.clip_norm)
            params = adam_step(params, grads, adam, config.lr, config.beta1,
                               config.beta2, config.adam_eps)
            losses.append(batch_loss)
            count += len(idx)
            steps += 1
    new_state = ModelState(cfg, params)
    _check_curvatures(new_state, snapshots, khs_values)
    loss = math.fsum(losses) / count if count else math.nan
    return EpochResult(new_state, loss, steps)


# --------------------------------------------------------------------------
# checkpoints


ADAM_PREFIX = ("adam.m.", "adam.v.")


def checkpoint_save(state: ModelState, path, extra: Mapping | None = None,
                    adam: AdamState | None = None) -> None:
    """Write parameters and config; with ``adam`` the optimizer moments too, for resuming."""
    meta = {"version": CHECKPOINT_VERSION, "config": state.config.to_dict(),
            "extra": dict(extra or {}), "adam_step": None if adam is None else adam.step}
    arrays = dict(state.params)
    if adam is not None:
        arrays.update({ADAM_PREFIX[0] + k: v for k, v in adam.m.items()})
        arrays.update({ADAM_PREFIX[1] + k: v for k, v in adam.v.items()})
    serialization.save(path, CHECKPOINT_KIND, meta, arrays)


def load_training_state(path) -> tuple[ModelState, AdamState | None, dict]:
    """(state, optimizer state or None, extra metadata) from a checkpoint."""
    meta, arrays = serialization.load(path, CHECKPOINT_KIND)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise serialization.ContainerError(
            f"checkpoint version {meta.get('version')} is not supported (expected {CHECKPOINT_VERSION})")
    config = ModelConfig(**meta["config"])
    params = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()
              if not k.startswith(ADAM_PREFIX)}
    state = ModelState(config, params)
    expected = init_state(config, 0).params
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise serialization.ContainerError("checkpoint parameters do not match its configuration")
    adam = None
    if meta.get("adam_step") is not None:
        try:
            adam = AdamState({k: arrays[ADAM_PREFIX[0] + k] for k in params},
                             {k: arrays[ADAM_PREFIX[1] + k] for k in params}, int(meta["adam_step"]))
        except KeyError as exc:
            raise serialization.ContainerError(f"optimizer state is incomplete: {exc}") from None
    return state, adam, dict(meta.get("extra", {}))


def checkpoint_load(path) -> ModelState:
    return load_training_state(path)[0]


# --------------------------------------------------------------------------
# full runs


@dataclass
class FitResult:
    best: ModelState
    final: ModelState
    best_epoch: int
    log: list[tuple[int, float, float]] = field(default_factory=list)
    adam: AdamState | None = None

    def log_tsv(self) -> str:
        return format_log(self.log)


def format_log(rows) -> str:
    lines = ["epoch\tloss\tval_mrr"]
    for ep, loss, mrr in rows:
        lines.append(f"{ep}\t{loss:.10g}\t{mrr:.10g}")
    return "\n".join(lines) + "\n"


def fit(dataset: TKGDataset, config: TrainConfig, state: ModelState | None = None,
        on_epoch: Callable[[int, float, float], None] | None = None,
        adam: AdamState | None = None, start_epoch: int = 0) -> FitResult:
    """Train up to epoch ``config.epochs``, keeping the best validation-MRR state.

    The first log row is the starting state (loss NaN); it is epoch 0 for a
    fresh run. Resuming passes the saved state, optimizer moments and
    ``start_epoch`` so the run continues exactly where it stopped. Without
    validation facts the last state is kept.
    """
    from .evaluation import evaluate

    if state is None:
        state = init_state(config.model_config(dataset.num_entities, dataset.num_relations),
                           config.seed)
    b1, _ = dataset.boundaries
    train_snaps = dataset.snapshots[:b1]
    adam = adam if adam is not None else AdamState.zeros_like(state.params)

    def validate(st):
        if not dataset.valid:
            return math.nan
        return evaluate(st, dataset, "valid", history=config.val_history, seed=config.seed).mrr

    best, best_epoch = state, start_epoch
    best_mrr = validate(state)
    rows = [(start_epoch, math.nan, best_mrr)]
    for epoch in range(start_epoch + 1, config.epochs + 1):
        res = train_epoch(state, train_snaps, config, adam, epoch)
        state = res.state
        mrr = validate(state) if epoch % config.val_every == 0 or epoch == config.epochs else math.nan
        rows.append((epoch, res.loss, mrr))
        log.info("epoch %d loss %.6f val_mrr %.4f", epoch, res.loss, mrr)
        if on_epoch:
            on_epoch(epoch, res.loss, mrr)
        if math.isnan(best_mrr) and not dataset.valid:
            best, best_epoch = state, epoch
        elif mrr > best_mrr or math.isnan(best_mrr) and not math.isnan(mrr):
            best, best_mrr, best_epoch = state, mrr, epoch
    return FitResult(best, state, best_epoch, rows, adam)
