"""Command-line front end: simulate, convert, train, evaluate, compare,
gradcheck.

Data directories hold log.tsv (canonical click log), features.tsv, and
optionally truth.tsv from the simulator.  Model directories hold either
a DRLC bundle (manifest.json + checkpoints) or a PGM parameter TSV.
Every artifact embeds the config hash, and re-running any command with
unchanged inputs reproduces its outputs byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .clicklog import (ClickLogError, Dataset, parse_interactive_csv,
                       read_canonical_file, read_ground_truth, simulate_logs,
                       split_dataset, write_canonical_file,
                       write_ground_truth)
from .config import ConfigError, ExperimentConfig
from .drlc import DrlcModel
from .evaluation import Report, evaluate_model
from .features import read_feature_tsv, write_feature_tsv
from .nn import CheckpointError, DivergenceError
from .pgm import PGM_KINDS, PgmModel

LOG_NAME = "log.tsv"
FEATURES_NAME = "features.tsv"
TRUTH_NAME = "truth.tsv"
META_NAME = "meta.json"
GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _write_meta(out_dir: Path, payload: dict):
    with open(out_dir / META_NAME, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_data_dir(data_dir) -> Dataset:
    src = Path(data_dir)
    log_path = src / LOG_NAME
    if not log_path.exists():
        raise ClickLogError(f"no {LOG_NAME} in {src}")
    with open(log_path, "r", encoding="utf-8") as fh:
        impressions = list(read_canonical_file(fh))
    feat_path = src / FEATURES_NAME
    table = read_feature_tsv(feat_path) if feat_path.exists() else {}
    return Dataset(impressions, table)


def load_model_dir(model_dir):
    src = Path(model_dir)
    if (src / "manifest.json").exists():
        return DrlcModel.load(src), "drlc"
    if (src / "params.tsv").exists():
        model = PgmModel.load(src / "params.tsv")
        return model, model.kind
    raise ClickLogError(f"{src} holds neither a DRLC bundle nor a PGM model")


def _model_meta(model_dir) -> dict:
    meta_path = Path(model_dir) / META_NAME
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    return {}


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, truth = simulate_logs(cfg.sim_config())
    write_canonical_file(out / LOG_NAME, ds.impressions)
    write_feature_tsv(out / FEATURES_NAME, ds.feature_table)
    write_ground_truth(out / TRUTH_NAME, truth)
    _write_meta(out, {"command": "simulate", "config_hash": cfg.config_hash,
                      "impressions": len(ds.impressions)})
    print(f"simulated {len(ds.impressions)} impressions into {out}")
    return 0


def cmd_convert(args) -> int:
    if args.source_format != "interactive-csv":
        raise ConfigError(f"unknown input format {args.source_format!r}")
    impressions, skipped = parse_interactive_csv(Path(args.input))
    write_canonical_file(args.out, impressions)
    print(f"converted {len(impressions)} impressions "
          f"({skipped} rows skipped) into {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    ds = load_data_dir(args.data)
    train_split, _, _ = split_dataset(ds, cfg.split_ratios(), cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "drlc":
        ds.check_features()
        model = DrlcModel.fit(train_split, cfg.hyper())
        model.save(out)
        epochs_run = model.history[-1]["epoch"] if model.history else 0
        print(f"trained drlc for {epochs_run} epochs -> {out}")
    else:
        model = PgmModel.train(args.model, train_split, cfg["pgm.iters"],
                               cfg["pgm.persevere"])
        model.save(out / "params.tsv")
        print(f"trained {args.model} ({model.iterations} iterations) -> {out}")
    _write_meta(out, {"command": "train", "model": args.model,
                      "config_hash": cfg.config_hash,
                      "config": cfg.canonical()})
    return 0


def _evaluate_dir(model_dir, ds: Dataset, ks) -> Report:
    model, kind = load_model_dir(model_dir)
    meta = _model_meta(model_dir)
    return evaluate_model(
        model, ds, ks, model_name=kind,
        dataset_name=str(Path(model_dir).name),
        metadata={"config_hash": meta.get("config_hash", ""),
                  "model_dir": str(model_dir)})


def _render_table(reports: list[Report], ks) -> str:
    headers = ["Model", "Perplexity", "Log-likelihood"]
    headers += [f"NDCG@{k}" for k in ks]
    rows = [[r.model, f"{r.perplexity_overall:.4f}",
             f"{r.log_likelihood:.4f}"]
            + [f"{r.ndcg[k]:.4f}" for k in ks] for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows))
              for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(headers), sep] + [fmt(row) for row in rows])


def cmd_evaluate(args) -> int:
    ks = tuple(int(p) for p in args.ks.split(","))
    ds = load_data_dir(args.data)
    report = _evaluate_dir(args.model, ds, ks)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    if args.csv:
        report.write_csv(args.csv)
    if args.table:
        print(_render_table([report], ks))
    else:
        print(f"{report.model}: perplexity {report.perplexity_overall:.4f}, "
              f"log-likelihood {report.log_likelihood:.4f}")
    return 0


def cmd_compare(args) -> int:
    ks = tuple(int(p) for p in args.ks.split(","))
    ds = load_data_dir(args.data)
    reports = [_evaluate_dir(d, ds, ks) for d in args.models]
    reports.sort(key=lambda r: (r.perplexity_overall, r.model))
    payload = {
        "ranking": [r.model for r in reports],
        "reports": [json.loads(r.to_json()) for r in reports],
    }
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(_render_table(reports, ks))
    return 0


def cmd_gradcheck(args) -> int:
    from .nn.network import grad_check, random_smooth_triple
    worst = 0.0
    for i in range(args.triples):
        net, x, target = random_smooth_triple(args.seed * 1000 + i)
        worst = max(worst, grad_check(net, x, target))
    print(f"max relative error over {args.triples} triples: {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        print(f"FAIL: exceeds tolerance {GRADCHECK_TOLERANCE:g}",
              file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="declick",
                description="De-biased click modelling toolkit")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap (compute is single-threaded; 1 keeps "
                        "strict determinism)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic click log")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("convert", help="convert an external log format")
    s.add_argument("--from", dest="source_format", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("train", help="train a model on a data directory")
    s.add_argument("--model", required=True,
                   choices=("drlc",) + PGM_KINDS)
    s.add_argument("--data", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="metrics for one trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--ks", default="1,3,5,10")
    s.add_argument("--report", required=True)
    s.add_argument("--csv", default=None, help="also write a flat CSV row")
    s.add_argument("--table", action="store_true",
                   help="print an aligned text table")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="rank several models on one dataset")
    s.add_argument("--models", nargs="+", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--ks", default="1,3,5,10")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("gradcheck", help="finite-difference gradient check")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--triples", type=int, default=20)
    s.set_defaults(func=cmd_gradcheck)
    return p


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.func(args)
    except (ConfigError, ClickLogError, CheckpointError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, RuntimeError, ValueError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    entry()
