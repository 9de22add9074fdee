"""Built-in verification: geometry properties, gradient checks and a toy pipeline."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .geometry.properties import run_all
from .graphdata import Quadruple, SnapshotGraph
from .model import ModelConfig, ModelState, Network, init_state, window_khs


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{self.name}\t{'pass' if self.passed else 'FAIL'}\t{self.detail}"


def toy_instance():
    """3 entities, 2 relations, 3 timestamps: two history snapshots and a target."""
    history = [SnapshotGraph(0, [(0, 0, 1), (1, 1, 2)]),
               SnapshotGraph(1, [(0, 1, 2), (2, 0, 1), (1, 0, 0)])]
    target = [Quadruple(0, 0, 2, 2), Quadruple(2, 1, 1, 2)]
    return history, target


def toy_state(backend: str = "poincare", schedule: str = "timeseries", seed: int = 0,
              dim: int = 3) -> ModelState:
    """Toy model with every parameter group moved away from its initial value."""
    cfg = ModelConfig(3, 2, dim=dim, window=2, lam=0.5, subject_weight=0.3,
                      backend=backend, schedule=schedule)
    st = init_state(cfg, seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x6C])))
    st.params = {k: v + rng.normal(0.0, 0.3, v.shape) for k, v in st.params.items()}
    return st


def toy_objective(state: ModelState):
    history, target = toy_instance()
    khs_values = window_khs(history)

    def f(p):
        net = Network(state.config, p)
        return net.objective(target, net.replay(history, khs_values),
                             net.replay(history, khs_values, inverse=True))

    return f


def toy_gradcheck(backend="poincare", schedule="timeseries", seed=0, state=None) -> ad.GradCheckReport:
    state = state or toy_state(backend, schedule, seed)
    return ad.grad_check(toy_objective(state), state.params, step=1e-5, tolerance=1e-4)


def _pipeline(seed: int, inject_nan: str | None) -> list[CheckResult]:
    from .evaluation import evaluate
    from .synthetic import hierarchical_tkg
    from .training import TrainConfig, train_epoch

    ds = hierarchical_tkg(num_entities=15, num_relations=2, num_times=10, initial=8, seed=seed)
    cfg = TrainConfig(lr=0.01, dim=8, window=3, epochs=2, seed=seed)
    state = init_state(cfg.model_config(ds.num_entities, ds.num_relations), seed)
    if inject_nan:
        state.params[inject_nan].reshape(-1)[0] = np.nan
    out = []
    bad = [k for k, v in state.params.items() if not np.all(np.isfinite(v))]
    out.append(CheckResult("pipeline.finite_parameters", not bad,
                           f"non-finite: {','.join(bad)}" if bad else ""))
    if bad:
        return out
    b1, _ = ds.boundaries
    losses = []
    try:
        for epoch in range(1, cfg.epochs + 1):
            res = train_epoch(state, ds.snapshots[:b1], cfg, epoch=epoch)
            state = res.state
            losses.append(res.loss)
    except FloatingPointError as exc:
        out.append(CheckResult("pipeline.training", False, str(exc)))
        return out
    out.append(CheckResult("pipeline.training", all(math.isfinite(v) for v in losses),
                           " ".join(f"{v:.4f}" for v in losses)))
    rep = evaluate(state, ds, "test", history="sampled", seed=seed)
    ok = (0 < rep.mrr <= 1) and rep.hits1 <= rep.hits3 <= rep.hits10 and rep.count > 0
    out.append(CheckResult("pipeline.evaluation", bool(ok), f"mrr={rep.mrr:.4f} n={rep.count}"))
    return out


def run_selftest(seed: int = 0, inject_nan: str | None = None, geometry_cases: int = 2000):
    """Run every check; returns (results, seconds)."""
    t0 = time.perf_counter()
    results = [CheckResult(f"geometry.{r.name}", r.passed, f"max_err={r.max_error:.2e}")
               for r in run_all(geometry_cases, seed=seed)]
    for backend in ("poincare", "lorentz"):
        state = toy_state(backend, "timeseries", seed)
        if inject_nan:
            if inject_nan not in state.params:
                raise KeyError(f"unknown parameter {inject_nan!r}")
            state.params[inject_nan].reshape(-1)[0] = np.nan
        rep = toy_gradcheck(state=state)
        results.append(CheckResult(f"gradcheck.{backend}", rep.passed, f"max_rel_err={rep.max_error:.2e}"))
    results.extend(_pipeline(seed, inject_nan))
    return results, time.perf_counter() - t0
