"""Command-line interface.

Human-readable messages go to stderr; machine-readable TSV goes to stdout
or to ``--out``. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ENV = "CURVTKG_DATA"
BUNDLE_NAME = "dataset.cvtk"
CHECKPOINT_NAME = "checkpoint.cvtk"
LOG_NAME = "train_log.tsv"
LAST_NAME = "last.cvtk"

log = logging.getLogger("curvtkg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cap_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be at least 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _data_path(arg: str | None) -> Path:
    """Resolve --data, falling back to (or relative to) $CURVTKG_DATA."""
    root = os.environ.get(DATA_ENV)
    if arg is None:
        if not root:
            raise UsageError(f"--data is required (or set {DATA_ENV})")
        return Path(root)
    p = Path(arg)
    if not p.exists() and root and not p.is_absolute() and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _load_dataset(arg, interval="expand"):
    from .graphdata import DataError

    path = _data_path(arg)
    if path.is_file() or (path / BUNDLE_NAME).is_file():
        return bundle_load(path if path.is_file() else path / BUNDLE_NAME)
    if not path.exists():
        raise DataError(f"data path {path} does not exist")
    from .graphdata import load_directory

    return load_directory(path, interval)


def bundle_save(dataset, path) -> None:
    import numpy as np

    from . import serialization

    meta = {"name": dataset.name, "num_entities": dataset.num_entities,
            "num_relations": dataset.num_relations, "num_times": dataset.num_times}
    arrays = {name: np.asarray(getattr(dataset, name), dtype=np.int64).reshape(-1, 4)
              for name in ("train", "valid", "test")}
    serialization.save(path, "dataset", meta, arrays)


def bundle_load(path):
    from . import serialization
    from .graphdata import DataError, Quadruple, TKGDataset

    try:
        meta, arrays = serialization.load(path, "dataset")
    except serialization.ContainerError as exc:
        raise DataError(f"{path}: {exc}") from None
    parts = {k: [Quadruple(*map(int, row)) for row in arrays[k]] for k in ("train", "valid", "test")}
    ds = TKGDataset(meta["num_entities"], meta["num_relations"], meta["num_times"],
                    parts["train"], parts["valid"], parts["test"], name=meta["name"])
    ds.check()
    return ds


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    from .curvature import khs_series

    ds = _load_dataset(args.data, args.interval)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle_save(ds, out / BUNDLE_NAME)
    summary = ds.summary()
    summary["mean_khs"] = khs_series(ds.snapshots).mean
    text = "key\tvalue\n" + "".join(
        f"{k}\t{v:.6f}\n" if isinstance(v, float) else f"{k}\t{v}\n" for k, v in summary.items())
    (out / "summary.tsv").write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    log.info("wrote %s", out / BUNDLE_NAME)
    return EXIT_OK


def cmd_stats(args) -> int:
    from .curvature import khs_series

    ds = _load_dataset(args.data, args.interval)
    series = khs_series(ds.snapshots)
    sched = _checkpoint(args.checkpoint).schedule if args.checkpoint else None
    lines = ["t\tkhs\tc_t"]
    last = 0.0
    for g, s in zip(ds.snapshots, series.scores):
        last = s if len(g) else last
        c = f"{sched.evaluate(g.t, last):.6f}" if sched else "nan"
        lines.append(f"{g.t}\t{s:.6f}\t{c}")
    lines.append(f"mean\t{series.mean:.6f}\t")
    _emit("\n".join(lines) + "\n", args.out)
    log.info("mean khs over non-empty snapshots: %.6f", series.mean)
    return EXIT_OK


TRAIN_OVERRIDES = ("lr", "batch_size", "epochs", "window", "lam", "subject_weight", "clip_norm",
                   "schedule", "backend", "dim", "poly_degree", "val_history", "val_every")


def _train_config(args):
    from dataclasses import replace

    from .training import TrainConfig, load_config

    base = TrainConfig(seed=args.seed)
    cfg = load_config(args.config, base) if args.config else base
    overrides = {k: getattr(args, k) for k in TRAIN_OVERRIDES if getattr(args, k) is not None}
    if args.seed_given:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def cmd_train(args) -> int:
    from .training import checkpoint_save, fit, format_config, format_log

    cfg = _train_config(args)
    ds = _load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8", newline="\n")

    def progress(epoch, loss, mrr):
        log.info("epoch %d\tloss %.6f\tval_mrr %.4f", epoch, loss, mrr)

    state, adam, start = None, None, 0
    if args.resume:
        state, adam, extra = _training_state(args.resume)
        _check_compatible(state, ds)
        start = int(extra.get("epoch", 0))
        if state.config != cfg.model_config(ds.num_entities, ds.num_relations):
            raise UsageError("--resume checkpoint was trained with a different model configuration")
    res = fit(ds, cfg, state=state, on_epoch=progress, adam=adam, start_epoch=start)
    checkpoint_save(res.best, out / CHECKPOINT_NAME, {"best_epoch": res.best_epoch})
    checkpoint_save(res.final, out / LAST_NAME, {"epoch": max(start, cfg.epochs)}, adam=res.adam)
    (out / LOG_NAME).write_text(format_log(res.log), encoding="utf-8", newline="\n")
    log.info("best epoch %d; checkpoint written to %s", res.best_epoch, out / CHECKPOINT_NAME)
    return EXIT_OK


def _training_state(path):
    from . import serialization
    from .graphdata import DataError
    from .training import load_training_state

    try:
        return load_training_state(path)
    except serialization.ContainerError as exc:
        raise DataError(f"{path}: {exc}") from None


def _checkpoint(path):
    return _training_state(path)[0]


def _check_compatible(state, ds):
    from .graphdata import DataError

    if (state.config.num_entities, state.config.num_relations) != (ds.num_entities, ds.num_relations):
        raise DataError("checkpoint vocabulary does not match the dataset")


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate

    state = _checkpoint(args.checkpoint)
    ds = _load_dataset(args.data)
    _check_compatible(state, ds)
    rep = evaluate(state, ds, args.split, history=args.history, seed=args.seed,
                   temperature=args.temperature, budget=args.budget, filter_mode=args.filter)
    _emit(rep.to_tsv(), args.out)
    if args.ranks:
        Path(args.ranks).write_text(rep.rank_dump(), encoding="utf-8", newline="\n")
    return EXIT_OK


def parse_query(text: str):
    """'s r ? t' or '? r o t' -> (direction, known entity, relation, t)."""
    parts = text.split()
    if len(parts) != 4:
        raise UsageError(f"query must have four fields, got {text!r}")
    s, r, o, t = parts
    try:
        if o == "?" and s != "?":
            return "object", int(s), int(r), int(t)
        if s == "?" and o != "?":
            return "subject", int(o), int(r), int(t)
    except ValueError:
        raise UsageError(f"query fields must be integer ids: {text!r}") from None
    raise UsageError("exactly one of subject/object must be '?'")


def cmd_predict(args) -> int:
    import numpy as np

    from .evaluation import default_budget, multi_step_sample
    from .graphdata import DataError
    from .model import histories, prob_object

    direction, known, rel, t = parse_query(args.query)
    state = _checkpoint(args.checkpoint)
    ds = _load_dataset(args.data)
    _check_compatible(state, ds)
    if not 0 <= known < ds.num_entities or not 0 <= rel < ds.num_relations:
        raise DataError("query ids are outside the vocabulary")
    if t < 0:
        raise UsageError("timestamp must be nonnegative")
    if args.topk < 1:
        raise UsageError("--topk must be at least 1")
    context = ds.snapshots[:min(t, ds.num_times)]
    if t > ds.num_times:
        res = multi_step_sample(state, context, t - ds.num_times, default_budget(ds), seed=args.seed)
        fwd, inv = res.forward, res.inverse
    else:
        fwd, inv = histories(state, context)
    p = prob_object(known, rel, fwd if direction == "object" else inv, state)
    order = np.argsort(-p, kind="stable")[:args.topk]
    lines = ["rank\tentity\tprobability"] + [f"{i + 1}\t{e}\t{p[e]:.8g}" for i, e in enumerate(order)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .selftest import toy_gradcheck

    rep = toy_gradcheck(args.backend, args.schedule, args.seed)
    lines = ["parameter\tmax_rel_error\tstatus"]
    lines += [f"{k}\t{v:.3e}\t{'ok' if v < rep.tolerance else 'FAIL'}" for k, v in rep.group_max().items()]
    _emit("\n".join(lines) + "\n", args.out)
    log.info("gradient check %s (max relative error %.3e)", "passed" if rep.passed else "FAILED",
             rep.max_error)
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    try:
        results, seconds = run_selftest(args.seed, args.inject_nan)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    lines = ["check\tstatus\tdetail"] + [r.line() for r in results]
    _emit("\n".join(lines) + "\n", args.out)
    failed = [r.name for r in results if not r.passed]
    log.info("selftest %s in %.1f s%s", "FAILED" if failed else "passed", seconds,
             f"; failing: {', '.join(failed)}" if failed else "")
    return EXIT_NUMERIC if failed else EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="curvtkg", description="Curvature-varying hyperbolic temporal KG extrapolation.")
    p.add_argument("--seed", type=int, default=None, help="single source of randomness (default 0)")
    p.add_argument("--threads", type=int, default=None, help="cap numeric library threads")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("ingest", help="parse a dataset directory into a binary bundle")
    s.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--interval", choices=("expand", "start"), default="expand")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("stats", help="per-timestamp hierarchy scores as TSV")
    s.add_argument("--data")
    s.add_argument("--checkpoint", help="fill the c_t column from this model's schedule")
    s.add_argument("--interval", choices=("expand", "start"), default="expand")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", help="train and write checkpoint + log")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--data")
    s.add_argument("--out", required=True, help="output directory")
    for name, typ in (("lr", float), ("batch-size", int), ("epochs", int), ("window", int),
                      ("lam", float), ("subject-weight", float), ("clip-norm", float),
                      ("dim", int), ("poly-degree", int), ("val-every", int)):
        s.add_argument(f"--{name}", type=typ)
    s.add_argument("--schedule", choices=("constant", "timeseries", "hierscore", "combined"))
    s.add_argument("--backend", choices=("poincare", "lorentz"))
    s.add_argument("--val-history", choices=("sampled", "oracle"))
    s.add_argument("--resume", help=f"continue from a {LAST_NAME} written by an earlier run")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="filtered MRR / Hits@k as TSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data")
    s.add_argument("--split", choices=("train", "valid", "test"), default="test")
    s.add_argument("--history", choices=("sampled", "oracle"), default="sampled")
    s.add_argument("--filter", choices=("any", "time", "raw"), default="any")
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--budget", type=int, default=None, help="facts per sampled snapshot")
    s.add_argument("--ranks", help="write per-query ranks to this file")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="rank candidates for 's r ? t' or '? r o t'")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data")
    s.add_argument("--query", required=True)
    s.add_argument("--topk", type=int, default=10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("gradcheck", help="finite-difference check of the full loss on a toy instance")
    s.add_argument("--backend", choices=("poincare", "lorentz"), default="poincare")
    s.add_argument("--schedule", choices=("constant", "timeseries", "hierscore", "combined"),
                   default="timeseries")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("selftest", help="geometry properties, gradient checks and a toy pipeline")
    s.add_argument("--inject-nan", metavar="PARAM", help="corrupt one parameter (tests the failure path)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
    try:
        _cap_threads(args.threads)
        from .graphdata import DataError
        from .model import NumericalError

        try:
            return args.func(args)
        except DataError as exc:
            log.error("data error: %s", exc)
            return EXIT_DATA
        except (NumericalError, FloatingPointError) as exc:
            log.error("numerical failure: %s", exc)
            return EXIT_NUMERIC
        except ValueError as exc:
            log.error("error: %s", exc)
            return EXIT_USAGE
    except UsageError as exc:
        log.error("usage error: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
