"""Command-line interface: ``sinkprop {train,eval,rank,check}``.

Exit codes: 0 on success, 1 when ``check`` finds a failing check, 2 on
input, parse or configuration errors.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, checks
from .data import DataSplit, MinMaxScaler, read_letor
from .decode import DEFAULT_CAP
from .errors import SinkpropError
from .train import (METRICS, Model, TrainConfig, evaluate, fit, format_model,
                    load_model)

VERSION = f"sinkprop-{__version__}"


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list: {text!r}")


def _k_value(text):
    if text == "auto":
        return None
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--k must be 'auto' or a positive integer")
    if k < 1:
        raise argparse.ArgumentTypeError("--k must be >= 1")
    return k


def _write_output(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_manifest(out, command, config, inputs, seed=None):
    if out in (None, "-"):
        return
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "seed": seed,
        "version": VERSION,
    }
    Path(f"{out}.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _check_cap(cap):
    if cap < 1:
        raise UsageError("--cap must be >= 1")


def cmd_train(args):
    _check_cap(args.cap)
    if args.minmax and args.param == "ll":
        raise UsageError("--minmax is only supported with --param smooth")
    train_q = read_letor(args.train)
    vali_q = read_letor(args.vali)
    width = max(q.features.shape[1] for q in train_q + vali_q)
    for q in train_q + vali_q:
        if q.features.shape[1] < width:
            q.features = np.hstack([q.features,
                                    np.zeros((len(q), width - q.features.shape[1]))])
    scaler = None
    if args.minmax:
        scaler = MinMaxScaler().fit(train_q)
        train_q, vali_q = scaler.transform(train_q), scaler.transform(vali_q)
    config = TrainConfig(
        parameterization=args.param, lambdas=args.lambdas, sigmas=args.sigmas,
        max_iter=args.max_iter, patience=args.patience, k=args.k,
        sinkhorn_iters=args.sinkhorn_iters, epsilon=args.epsilon, cap=args.cap,
        validation_k=args.validation_k, resample=args.resample,
        max_docs=args.max_docs, seed=args.seed)
    model = fit(config, DataSplit(train_q, vali_q, []))
    if scaler is not None:
        # Kernel scores only enter through differences, so dropping the
        # shift leaves the model unchanged on raw features.
        model.W = model.W / scaler.span[:, None]
    _write_output(args.out, format_model(model))
    resolved = asdict(config)
    resolved["k"] = model.gain.k
    resolved["minmax"] = args.minmax
    _write_manifest(args.out, "train", resolved, [args.train, args.vali], args.seed)
    return 0


def _pad_to_model(queries, model):
    M = model.W.shape[0]
    for q in queries:
        width = q.features.shape[1]
        if width > M:
            raise UsageError(f"query {q.qid} has {width} features, model expects {M}")
        if width < M:
            q.features = np.hstack([q.features, np.zeros((len(q), M - width))])
    return queries


def cmd_eval(args):
    _check_cap(args.cap)
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise UsageError(f"unknown metrics {unknown}; choose from {list(METRICS)}")
    model = load_model(args.model)
    queries = _pad_to_model(read_letor(args.test), model)
    report = evaluate(model, queries, metrics, k_max=args.k_max,
                      alpha=args.rbp_alpha, cap=args.cap,
                      exclude_zero=args.exclude_zero)
    buf = io.StringIO()
    buf.write("metric,k,value\n")
    for metric, k, value in report.rows():
        buf.write(f"{metric},{k},{float(value)!r}\n")
    _write_output(args.out, buf.getvalue())
    config = {"metrics": list(metrics), "k_max": args.k_max,
              "rbp_alpha": args.rbp_alpha, "cap": args.cap,
              "exclude_zero": args.exclude_zero}
    _write_manifest(args.out, "eval", config, [args.model, args.test])
    return 0


def cmd_rank(args):
    _check_cap(args.cap)
    model = load_model(args.model)
    queries = _pad_to_model(read_letor(args.input), model)
    buf = io.StringIO()
    for q in queries:
        ranking = model.rank(q.features, args.cap)
        scores = model.scores(q.features)
        for rank, doc in enumerate(ranking, start=1):
            buf.write(f"{q.qid}\t{rank}\t{int(doc)}\t{float(scores[doc])!r}\n")
    _write_output(args.out, buf.getvalue())
    _write_manifest(args.out, "rank", {"cap": args.cap}, [args.model, args.input])
    return 0


def cmd_check(args):
    if args.sinkhorn_iters < 0:
        raise UsageError("--sinkhorn-iters must be >= 0")
    results = checks.run_all(args.seed, args.sinkhorn_iters, args.trials)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sinkprop",
        description="Learning to rank with Sinkhorn-normalized marginal matrices.")
    parser.add_argument("--version", action="version", version=VERSION)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a training/validation pair")
    p.add_argument("--train", required=True)
    p.add_argument("--vali", required=True)
    p.add_argument("--param", choices=("smooth", "ll"), default="smooth")
    p.add_argument("--k", type=_k_value, default=None,
                   help="training NDCG depth; 'auto' uses the largest query")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sinkhorn-iters", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--resample", type=int, default=20,
                   help="derived queries per training query (0 disables)")
    p.add_argument("--max-docs", type=int, default=200)
    p.add_argument("--lambdas", type=_float_list, default=TrainConfig.lambdas)
    p.add_argument("--sigmas", type=_float_list, default=TrainConfig.sigmas)
    p.add_argument("--max-iter", type=int, default=TrainConfig.max_iter)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--validation-k", type=int, default=10)
    p.add_argument("--minmax", action="store_true",
                   help="min-max scale features using the training file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric-vs-truncation CSV for a test file")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--metrics", default="ndcg")
    p.add_argument("--rbp-alpha", type=float, default=0.8)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--exclude-zero", action="store_true",
                   help="drop queries without relevant documents")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rank", help="decode rankings for every query in a file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("check", help="gradient and oracle self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sinkhorn-iters", type=int, default=5)
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, SinkpropError, OSError, ValueError) as exc:
        print(f"sinkprop {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
