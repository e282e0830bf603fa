"""Command-line interface: ``fit``, ``explain``, ``synth``, ``eval`` and ``equiv``.

Exit codes: 0 success, 2 input error, 3 computational failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .assign import AssignConfig, InvariantError, explain
from .evaluation import aggregate, marg_classify, metric_suite
from .graph import GraphError, InterventionPattern, all_patterns, equivalence_classes, read_dag
from .model import FittedScm, fit_scm
from .regress import FitError, knots_for
from .synth import SynthSpec, generate, read_truth_csv, write_instance

log = logging.getLogger("causal_anomaly")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3

DEFAULTS = {
    "seed": 0,
    "M": 100,
    "alpha": 0.01,
    "lam": 1.0,
    "percentile": 10.0,
    "workers": None,
    "strict": True,
}


class InputError(Exception):
    pass


def read_data_csv(path):
    """Header of node names plus a numeric body."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric cell") from None
        body.append(vals)
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values")
    return header, data


def load_config(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise InputError(f"bad config file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config file must hold a JSON object")
    return cfg


def resolve(args, name, cfg):
    """flags > config file > defaults."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    if name in cfg:
        return cfg[name]
    return DEFAULTS[name]


def _workers(args, cfg):
    w = resolve(args, "workers", cfg)
    return int(w) if w else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args):
    cfg = load_config(args.config)
    columns, data = read_data_csv(args.data)
    dag = read_dag(args.dag)
    if data.shape[1] != dag.node_count:
        raise InputError(f"data has {data.shape[1]} columns but the graph has {dag.node_count} nodes")
    alpha = float(resolve(args, "alpha", cfg))
    if not 0 <= alpha < 0.5:
        raise InputError("alpha must lie in [0, 0.5)")
    scm = fit_scm(data, dag, lam=float(resolve(args, "lam", cfg)), alpha=alpha,
                  columns=columns, workers=_workers(args, cfg))
    scm.save(args.out)
    resid = scm.residuals(data)
    print("node\tname\tparents\tknots\tresidual_sd\tbandwidth")
    for j in range(dag.node_count):
        pa = dag.parents(j)
        m = knots_for(data.shape[0]) if pa else 0
        print(f"{j}\t{columns[j]}\t{len(pa)}\t{m}\t{np.std(resid[:, j]):.6g}\t"
              f"{scm.noises[j].bandwidth:.6g}")
    return EXIT_OK


def cmd_explain(args):
    cfg = load_config(args.config)
    columns, data = read_data_csv(args.data)
    try:
        scm = FittedScm.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load model {args.model}: {exc}") from exc
    if columns != list(scm.columns):
        raise InputError(f"column schema {columns} does not match the model's {scm.columns}")
    M = int(resolve(args, "M", cfg))
    if M < 1:
        raise InputError("M must be >= 1")
    config = AssignConfig(M=M, seed=int(resolve(args, "seed", cfg)),
                          percentile=float(resolve(args, "percentile", cfg)),
                          strict=bool(resolve(args, "strict", cfg)),
                          workers=_workers(args, cfg))
    report = explain(data, scm, config)
    summary = args.summary or str(Path(args.out).with_suffix(".json"))
    report.write(args.out, summary)
    a = report.assignment
    print(f"assigned {int(a.Z.sum())} mechanistic and {int(a.W.sum())} measurement outliers "
          f"in {a.assigned_samples().size} of {a.n_samples} samples")
    return EXIT_OK


def cmd_synth(args):
    spec = SynthSpec(d=args.d, N=args.N, edge_prob=args.edge_prob, noise_sd=args.noise_sd,
                     poly_len=args.poly_len, strength=args.strength,
                     target_contamination=args.contamination, seed=args.seed, rate=args.rate,
                     random_sign=args.random_sign)
    data, truth = generate(spec)
    prefix = args.out_prefix
    target = Path(prefix) if prefix.endswith(("/", os.sep)) else Path(prefix).parent
    target.mkdir(parents=True, exist_ok=True)
    write_instance(prefix, data, truth)
    print(f"wrote {prefix}data.csv, {prefix}dag.txt, {prefix}truth.csv "
          f"({int(truth.anomalous.sum())} anomalous samples, rate {spec.outlier_rate:.6g})")
    return EXIT_OK


def read_report(path, summary_path=None):
    """Report CSV back into ``(delta, labels, feature_names)`` matrices."""
    if summary_path is None:
        cand = Path(path).with_suffix(".json")
        summary_path = cand if cand.exists() else None
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc
    if summary_path is not None:
        features = json.loads(Path(summary_path).read_text())["features"]
    else:
        features = sorted({r["feature"] for r in rows})
    index = {f: k for k, f in enumerate(features)}
    n = 1 + max((int(r["sample_index"]) for r in rows), default=-1)
    d = len(features)
    delta = np.full((n, d), np.nan)
    labels = np.full((n, d), "none", dtype=object)
    for r in rows:
        if r["feature"] not in index:
            raise InputError(f"unknown feature {r['feature']!r} in report")
        i, j = int(r["sample_index"]), index[r["feature"]]
        delta[i, j] = float(r["delta_nats"])
        labels[i, j] = r["class"]
    if np.isnan(delta).any():
        raise InputError("report does not cover every (sample, feature) cell")
    return delta, labels, features


def cmd_eval(args):
    if args.aggregate:
        runs = []
        for p in args.aggregate:
            try:
                runs.append(json.loads(Path(p).read_text()))
            except (OSError, ValueError) as exc:
                raise InputError(f"cannot read metrics {p}: {exc}") from exc
        out = {"n_runs": len(runs), "metrics": aggregate(runs)}
        _emit(out, args.out)
        return EXIT_OK
    if not (args.report and args.truth):
        raise InputError("eval needs --report and --truth (or --aggregate)")
    delta, labels, features = read_report(args.report, args.summary)
    n, d = delta.shape
    if args.n_samples is not None:
        n = args.n_samples
    try:
        Z, W = read_truth_csv(args.truth, n, d)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    metrics = metric_suite(delta, labels, Z, W, seed=args.seed)
    if args.baseline == "marg":
        if not (args.data and args.dag):
            raise InputError("--baseline marg needs --data and --dag")
        _, data = read_data_csv(args.data)
        dag = read_dag(args.dag)
        if data.shape != delta.shape or dag.node_count != d:
            raise InputError("data, graph and report are misaligned")
        detected = list(zip(*np.nonzero(labels != "none")))
        marg = marg_classify(data, dag, detected, alpha=args.marg_alpha)
        marg_labels = np.full((n, d), "none", dtype=object)
        for (i, j), lab in marg.items():
            marg_labels[i, j] = lab
        base = metric_suite(delta, marg_labels, Z, W, seed=args.seed)
        metrics["marg_classification_accuracy"] = base["classification_accuracy"]
    _emit(metrics, args.out)
    return EXIT_OK


def cmd_equiv(args):
    dag = read_dag(args.dag)
    if args.pattern:
        pats = [_parse_pattern(p, dag.node_count) for p in args.pattern]
    else:
        pats = all_patterns(dag.node_count, args.max_order)
    try:
        classes = equivalence_classes(dag, pats)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = [[str(p) for p in group] for group in classes]
    _emit({"nodes": dag.node_count, "classes": out}, args.out)
    return EXIT_OK


def _parse_pattern(text, d):
    """``z=010,w=000``."""
    try:
        parts = dict(kv.split("=", 1) for kv in text.split(","))
        z, w = parts["z"], parts["w"]
    except (KeyError, ValueError):
        raise InputError(f"bad pattern {text!r}; expected z=<bits>,w=<bits>") from None
    if len(z) != d or len(w) != d or set(z + w) - {"0", "1"}:
        raise InputError(f"pattern {text!r} must hold {d} bits per indicator")
    return InterventionPattern(tuple(c == "1" for c in z), tuple(c == "1" for c in w))


def _emit(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="causal-anomaly",
                                description="Root-cause analysis with measurement/mechanistic "
                                            "outlier classification.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit mechanisms and residual densities")
    f.add_argument("--data", required=True)
    f.add_argument("--dag", required=True)
    f.add_argument("--out", required=True, help="model JSON path")
    f.add_argument("--config")
    f.add_argument("--lam", type=float)
    f.add_argument("--alpha", type=float, help="trim fraction")
    f.add_argument("--workers", type=int)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("explain", help="assign outliers and score root causes")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--out", required=True, help="report CSV path")
    e.add_argument("--summary", help="summary JSON path (default: report path with .json)")
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--M", type=int, help="Monte-Carlo completions")
    e.add_argument("--percentile", type=float, help="candidate pool percentile")
    e.add_argument("--workers", type=int)
    e.add_argument("--no-strict", dest="strict", action="store_const", const=False,
                   help="record invariant violations instead of failing")
    e.set_defaults(func=cmd_explain)

    s = sub.add_parser("synth", help="generate a synthetic benchmark instance")
    s.add_argument("--d", type=int, default=15)
    s.add_argument("--N", type=int, default=2000)
    s.add_argument("--edge-prob", type=float, default=0.3)
    s.add_argument("--noise-sd", type=float, default=0.1)
    s.add_argument("--poly-len", type=int, default=2)
    s.add_argument("--strength", type=float, default=5.0)
    s.add_argument("--contamination", type=float, default=0.10)
    s.add_argument("--rate", type=float, help="override the per-cell outlier rate")
    s.add_argument("--random-sign", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("eval", help="score a report against ground truth")
    v.add_argument("--report")
    v.add_argument("--summary")
    v.add_argument("--truth")
    v.add_argument("--n-samples", type=int)
    v.add_argument("--baseline", choices=["marg"])
    v.add_argument("--marg-alpha", type=float, default=0.01)
    v.add_argument("--data")
    v.add_argument("--dag")
    v.add_argument("--seed", type=int)
    v.add_argument("--aggregate", nargs="+", metavar="METRICS_JSON")
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)

    q = sub.add_parser("equiv", help="group intervention patterns by observed CI signature")
    q.add_argument("--dag", required=True)
    q.add_argument("--pattern", action="append", help="z=<bits>,w=<bits>; repeatable")
    q.add_argument("--max-order", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_equiv)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return args.func(args)
    except (InputError, GraphError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, InvariantError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
