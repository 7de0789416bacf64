"""Command-line entry point: ``mwgp {train,evaluate,predict,qpplot,crossval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set MWGP_NUM_THREADS to cap BLAS threads.
"""
import argparse
import csv
import json
import logging
import os
import subprocess
import sys
from dataclasses import asdict, fields

import numpy as np

from . import __version__
from .data import map_records, parse_ratings, read_records
from .errors import (EmptyDataset, EmptySet, FactorizationFailure, IncompatibleModel,
                     IndexOutOfRange, InvalidConfig, InvalidK, MWGPError, NonFiniteObjective,
                     ParseError)
from .evaluation import PredictionSet, export_qp_csv, qp_curve, summarize
from .pipeline import RunConfig, crossval, fit
from .serialization import load_model, save_model
from .svgp import predict

log = logging.getLogger("mwgp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ERRORS = (ParseError, EmptyDataset, EmptySet, IncompatibleModel, IndexOutOfRange, InvalidK,
               FileNotFoundError, IsADirectoryError)
NUMERIC_ERRORS = (FactorizationFailure, NonFiniteObjective, FloatingPointError)

MODEL_FILE = "model.mwgp"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- config files -----------------------------------------------------------

def _coerce(name, raw):
    kind = RunConfig.field_types()[name]
    if kind in (bool, "bool"):
        lowered = raw.strip().lower()
        if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise UsageError(f"{name}: expected a boolean, got {raw!r}")
        return lowered in ("1", "true", "yes", "on")
    if kind in (int, "int"):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = RunConfig.field_types()
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from None
    return values


def write_config_file(cfg, path):
    with open(path, "w") as fh:
        for f in fields(cfg):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")


def version_string():
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                              capture_output=True, text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# --- argument parsing ---------------------------------------------------------

def _add_run_args(p, data_required=True):
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--data", required=False, help="ratings file")
    p.add_argument("--format", choices=["movielens-dat", "csv", "jester", "movielens-tsv"])
    p.add_argument("--rank", type=int)
    p.add_argument("--inducing", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--quantiles", type=int)
    p.add_argument("--validation-fraction", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--no-centering", action="store_true")
    p.add_argument("--jester-count-column", action="store_true")
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = _Parser(prog="mwgp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model and save it")
    _add_run_args(p)

    p = sub.add_parser("crossval", help="k-fold cross-validation")
    _add_run_args(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--parallel-folds", action="store_true")

    p = sub.add_parser("evaluate", help="metrics and QP curve on a test file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="movielens-dat",
                   choices=["movielens-dat", "csv", "jester", "movielens-tsv"])
    p.add_argument("--quantiles", type=int, default=10)
    p.add_argument("--out", help="directory for metrics.json and qp_rmse.csv")
    p.add_argument("--jester-count-column", action="store_true")

    p = sub.add_parser("qpplot", help="write the QP curve data for one metric")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="movielens-dat",
                   choices=["movielens-dat", "csv", "jester", "movielens-tsv"])
    p.add_argument("--quantiles", type=int, default=10)
    p.add_argument("--metric", choices=["rmse", "mae"], default="rmse")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--jester-count-column", action="store_true")

    p = sub.add_parser("predict", help="predictive mean and stddev for user,item pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True, help="CSV with header user,item (raw ids)")
    p.add_argument("--out", required=True, help="predictions CSV")
    return parser


def resolve_run_config(args):
    values = asdict(RunConfig())
    if args.config:
        values.update(read_config_file(args.config))
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None and not isinstance(flag, bool):
            values[key] = flag
    if args.no_centering:
        values["centering"] = False
    if args.jester_count_column:
        values["jester_count_column"] = True
    cfg = RunConfig(**values)
    if not cfg.data:
        raise UsageError("--data is required (flag or config file)")
    return cfg


def _load_data(cfg):
    kwargs = {"jester_count_column": True} if cfg.jester_count_column else {}
    return parse_ratings(cfg.data, cfg.format, **kwargs)


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    write_config_file(cfg, os.path.join(cfg.out, "config.txt"))
    with open(os.path.join(cfg.out, "version.txt"), "w") as fh:
        fh.write(version_string() + "\n")


# --- subcommands --------------------------------------------------------------

def cmd_train(cfg):
    data = _load_data(cfg)
    _prepare_out(cfg)
    history_path = os.path.join(cfg.out, "history.csv")
    if os.path.exists(history_path):
        os.remove(history_path)
    state, history = fit(data, cfg, cfg.out)
    save_model(os.path.join(cfg.out, MODEL_FILE), state, data.user_ids, data.item_ids)
    final = history.records[-1] if history.records else {}
    metrics = {
        "num_triples": len(data),
        "num_users": data.num_users,
        "num_items": data.num_items,
        "final_elbo": final.get("elbo"),
        "noise_std": float(np.sqrt(state.noise.variance)),
        "validation_rmse": history.val_rmse[-1] if history.val_rmse else None,
        "stopped_early": history.stopped_early,
    }
    _write_json(metrics, os.path.join(cfg.out, "metrics.json"))
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def _test_predictions(model_path, data_path, fmt, jester_count_column=False):
    state, header = load_model(model_path)
    user_ids, item_ids = header.get("user_ids"), header.get("item_ids")
    if user_ids is None or item_ids is None:
        raise IncompatibleModel("model file carries no id tables")
    if len(user_ids) != state.config.num_users or len(item_ids) != state.config.num_items:
        raise IncompatibleModel("id tables disagree with the model dimensions")
    kwargs = {"jester_count_column": True} if jester_count_column else {}
    users, items, ratings = read_records(data_path, fmt, **kwargs)
    test, known = map_records(users, items, ratings, user_ids, item_ids)
    skipped = int((~known).sum())
    if skipped:
        log.warning("skipping %d test records with ids unseen in training", skipped)
    if len(test) == 0:
        raise EmptyDataset("no test records map onto the model's users and items")
    return predict(state, test).with_truth(test.ratings), skipped


def cmd_evaluate(args):
    preds, skipped = _test_predictions(args.model, args.data, args.format, args.jester_count_column)
    summary = summarize(preds, args.quantiles)
    summary["skipped_unseen"] = skipped
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        export_qp_csv(qp_curve(preds, args.quantiles, "rmse"), os.path.join(args.out, "qp_rmse.csv"))
        export_qp_csv(qp_curve(preds, args.quantiles, "mae"), os.path.join(args.out, "qp_mae.csv"))
        _write_json(summary, os.path.join(args.out, "metrics.json"))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_qpplot(args):
    preds, _ = _test_predictions(args.model, args.data, args.format, args.jester_count_column)
    curve = qp_curve(preds, args.quantiles, args.metric)
    export_qp_csv(curve, args.out)
    print(json.dumps({"metric": args.metric, "q": curve.q, "value": curve.values}))
    return EXIT_OK


def cmd_predict(args):
    state, header = load_model(args.model)
    umap = {raw: k for k, raw in enumerate(header.get("user_ids") or [])}
    imap = {raw: k for k, raw in enumerate(header.get("item_ids") or [])}
    raw_pairs = []
    with open(args.pairs, newline="") as fh:
        reader = csv.reader(fh)
        header_row = next(reader, None)
        if header_row is not None and [h.strip() for h in header_row[:2]] != ["user", "item"]:
            raise ParseError(f"pairs header must start with user,item; got {header_row}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ParseError("expected user,item", lineno)
            raw_pairs.append((row[0].strip(), row[1].strip()))

    idx = np.array([(umap.get(u, -1), imap.get(i, -1)) for u, i in raw_pairs], dtype=np.int64).reshape(-1, 2)
    seen = (idx >= 0).all(axis=1)
    mean = np.full(len(raw_pairs), state.y_mean)
    # prior fallback: no information about the pair beyond the global mean
    std = np.full(len(raw_pairs), np.sqrt(state.kernel.amplitude + state.noise.variance))
    if seen.any():
        p = predict(state, idx[seen])
        mean[seen] = p.mean
        std[seen] = p.std
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "item", "mean", "stddev", "unseen"])
        for (u, i), mu, sd, ok in zip(raw_pairs, mean, std, seen):
            w.writerow([u, i, f"{mu:.10g}", f"{sd:.10g}", int(not ok)])
    log.info("wrote %d predictions (%d unseen)", len(raw_pairs), int((~seen).sum()))
    return EXIT_OK


def cmd_crossval(cfg, parallel=False):
    data = _load_data(cfg)
    _prepare_out(cfg)

    def on_fold(fold, state, summary):
        fold_dir = os.path.join(cfg.out, f"fold{fold}")
        os.makedirs(fold_dir, exist_ok=True)
        save_model(os.path.join(fold_dir, MODEL_FILE), state, data.user_ids, data.item_ids)
        _write_json(summary, os.path.join(fold_dir, "metrics.json"))

    reports, agg = crossval(data, cfg, on_fold, parallel=parallel)
    result = {"folds": reports, "aggregate": agg}
    _write_json(result, os.path.join(cfg.out, "metrics.json"))
    print(json.dumps(agg, sort_keys=True))
    return EXIT_OK


def _limit_threads():
    n = os.environ.get("MWGP_NUM_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads()
    try:
        if args.command == "train":
            return cmd_train(resolve_run_config(args))
        if args.command == "crossval":
            cfg = resolve_run_config(args)
            return cmd_crossval(cfg, parallel=args.parallel_folds)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "qpplot":
            return cmd_qpplot(args)
        if args.command == "predict":
            return cmd_predict(args)
    except (UsageError, InvalidConfig) as exc:
        print(f"mwgp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"mwgp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as exc:
        print(f"mwgp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MWGPError as exc:
        print(f"mwgp: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
