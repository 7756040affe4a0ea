"""Command line front-end: prepare, mine-rules, train, evaluate, analyze-margins, verify-theorem.

All artifacts of a run live in one output directory.  Every command writes a
``<command>.run.json`` sidecar with the resolved config and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ABLATIONS, PRESETS, TrainConfig, preset, with_ablation
from .data import DatasetError, augment_inverse, build_query_sets, load_dataset, save_dataset
from .evaluation import evaluate_model, noisy_evaluation
from .rules import RuleIndex, coverage_report, mine_rules
from .synthetic import planted_rule_dataset
from .theory import DEFAULT_GRID, GaussianMarginSpec, grid_specs, theorem_check
from .trainer import Checkpoint, fit, prepare_data

logger = logging.getLogger("dualtkg")

MANIFEST = "manifest.json"
RULES = "rules.jsonl"
CHECKPOINT = "checkpoint.pt"


class MissingArtifact(Exception):
    def __init__(self, path):
        super().__init__(f"missing artifact: {path}")
        self.path = path


def _path(args, name):
    return os.path.join(args.out, name)


def _require(args, *names):
    for name in names:
        path = _path(args, name)
        if not os.path.exists(path):
            raise MissingArtifact(path)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _sidecar(args, command, config: TrainConfig | None = None, **extra):
    record = {
        "command": command,
        "version": __version__,
        "argv": sys.argv[1:],
        "seed": config.seed if config is not None else args.seed,
        "config": config.to_dict() if config is not None else None,
        "config_hash": config.digest() if config is not None else None,
        **extra,
    }
    _write_json(_path(args, f"{command}.run.json"), record)


def _dataset_hash(stats, splits):
    digest = hashlib.sha256(json.dumps(stats.to_dict(), sort_keys=True).encode())
    for name in sorted(splits):
        facts = [s.facts for s in splits[name]]
        arr = np.concatenate(facts) if facts else np.zeros((0, 4), dtype=np.int64)
        arr = arr[np.lexsort(arr.T[::-1])] if len(arr) else arr
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
    return digest.hexdigest()


def _load_prepared(args):
    """Reload the dataset recorded in the manifest and check it has not changed."""
    _require(args, MANIFEST)
    manifest = _read_json(_path(args, MANIFEST))
    stats, splits = load_dataset(manifest["data_dir"])
    if _dataset_hash(stats, splits) != manifest["hash"]:
        raise DatasetError(f"dataset at {manifest['data_dir']} changed since prepare; re-run prepare")
    return manifest, stats, splits


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args) -> TrainConfig:
    """Preset (or a complete custom config file), then ``--set`` overrides, ablation and seed."""
    name = args.preset
    if args.config and name is None:
        name = "custom"
    name = name or "icews14s"
    if name == "custom":
        if not args.config:
            raise ValueError("preset 'custom' needs --config with every TrainConfig field")
        values = _read_json(args.config)
        missing = sorted({f for f in TrainConfig.__dataclass_fields__} - set(values))
        if missing:
            raise ValueError(f"custom config must state every field; missing {missing}")
        config = TrainConfig.from_dict(values)
    else:
        if args.config:
            raise ValueError("--config is only accepted with --preset custom")
        config = preset(name)
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        overrides[key] = _parse_value(value)
    if overrides:
        unknown = set(overrides) - set(TrainConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = config.replace(**overrides)
    if args.ablation:
        config = with_ablation(config, args.ablation)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def cmd_make_synthetic(args):
    stats, splits = planted_rule_dataset(args.num_entities, args.num_relations, args.num_timestamps,
                                         args.active_pairs, args.episode_length, args.seed or 0)
    save_dataset(args.dataset, stats, splits)
    return {"dataset": args.dataset, **stats.to_dict()}


def cmd_prepare(args):
    stats, splits = load_dataset(args.data)
    manifest = {
        "stats": stats.to_dict(),
        "hash": _dataset_hash(stats, splits),
        "data_dir": os.path.abspath(args.data),
    }
    _write_json(_path(args, MANIFEST), manifest)
    _sidecar(args, "prepare", data_dir=manifest["data_dir"])
    return {"num_timestamps": stats.num_timestamps, "hash": manifest["hash"],
            "split_sizes": stats.split_sizes}


def cmd_mine_rules(args):
    _, stats, splits = _load_prepared(args)
    config = resolve_config(args)
    aug = {name: augment_inverse(snaps, stats.num_relations) for name, snaps in splits.items()}
    rules = mine_rules(aug["train"], config.min_support, config.max_rules_per_head)
    rules.save(_path(args, RULES))
    history = aug["train"] + aug.get("valid", [])
    query_sets = [build_query_sets(s, stats.num_relations) for s in aug.get("test", [])]
    report = coverage_report(rules, query_sets, history, config.cap_n).to_dict()
    report.update(num_rules=len(rules), cap_n=config.cap_n)
    _write_json(_path(args, "rule_coverage.json"), report)
    _sidecar(args, "mine-rules", config)
    return report


def cmd_train(args):
    _, stats, splits = _load_prepared(args)
    _require(args, RULES)
    config = resolve_config(args)
    config.save(_path(args, "config.json"))
    data = prepare_data(stats, splits, config, rules=RuleIndex.load(_path(args, RULES)))
    resume = None
    if args.resume:
        _require(args, CHECKPOINT)
        resume = Checkpoint.load(_path(args, CHECKPOINT))
    log_path = _path(args, "train_log.jsonl")
    if resume is None and os.path.exists(log_path):
        os.remove(log_path)
    ckpt = fit(config, data, resume=resume, log_path=log_path)
    ckpt.save(_path(args, CHECKPOINT))
    _sidecar(args, "train", config, ablation=config.ablation)
    return {"best_epoch": ckpt.epoch, "best_valid_mrr": ckpt.best_valid_mrr,
            "epochs_run": len(ckpt.history), "ablation": config.ablation}


def _load_for_eval(args):
    _, stats, splits = _load_prepared(args)
    _require(args, RULES, CHECKPOINT)
    ckpt = Checkpoint.load(_path(args, CHECKPOINT))
    config = TrainConfig.from_dict(ckpt.config)
    data = prepare_data(stats, splits, config, rules=RuleIndex.load(_path(args, RULES)))
    batches = data.test if args.split == "test" else data.valid
    if not batches:
        raise ValueError(f"split {args.split!r} has no facts")
    return ckpt, config, ckpt.build_model(), batches


def cmd_evaluate(args):
    ckpt, config, model, batches = _load_for_eval(args)
    seed = config.seed if args.seed is None else args.seed
    if args.noise_sigma:
        report, margins = noisy_evaluation(model, batches, args.noise_sigma, seed), None
    else:
        report, margins = evaluate_model(model, batches, margins=True)
    out = report.to_dict()
    out["margin_report"] = margins.to_dict() if margins is not None else None
    out["config_hash"] = config.digest()
    out["noise_sigma"] = args.noise_sigma
    out["split"] = args.split
    _write_json(_path(args, args.output), out)
    _sidecar(args, "evaluate", config, noise_sigma=args.noise_sigma, split=args.split)
    return out


def cmd_analyze_margins(args):
    _, config, model, batches = _load_for_eval(args)
    _, margins = evaluate_model(model, batches, margins=True)
    out = margins.to_dict()
    out["config_hash"] = config.digest()
    out["split"] = args.split
    out["fusion_reduces_error"] = margins.num_pairs > 0 and margins.p_err_fused < min(
        margins.p_err_d, margins.p_err_e)
    _write_json(_path(args, "margins.json"), out)
    _sidecar(args, "analyze-margins", config, split=args.split)
    return out


def _parse_grid(items):
    grid = dict(DEFAULT_GRID)
    for item in items or ():
        key, sep, values = item.partition("=")
        if not sep or key not in grid:
            raise ValueError(f"--grid expects mu=..., sigma=... or rho=..., got {item!r}")
        grid[key] = tuple(float(v) for v in values.split(","))
    return grid


def cmd_verify_theorem(args):
    grid = _parse_grid(args.grid)
    specs = grid_specs(**grid)
    if args.boundary:
        specs += [GaussianMarginSpec.identical(m, s, 1.0) for m in grid["mu"] for s in grid["sigma"]]
    seed = args.seed or 0
    rows = theorem_check(specs, samples=args.samples, seed=seed)
    statuses = [r["status"] for r in rows]
    out = {"grid": grid, "samples": args.samples, "seed": seed, "rows": rows,
           "all_pass": "fail" not in statuses,
           "counts": {s: statuses.count(s) for s in sorted(set(statuses))}}
    _write_json(_path(args, "theorem.json"), out)
    _sidecar(args, "verify-theorem", grid=grid, samples=args.samples)
    return out


def _add_config_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS) + ["custom"],
                   help="hyperparameter preset (default icews14s; 'custom' needs --config)")
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a single config field, e.g. --set embedding_dim=32")


def _add_eval_flags(p):
    p.add_argument("--split", choices=("valid", "test"), default="test")


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress):
        # subcommand copies must not overwrite values given before the subcommand
        default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--config", default=default(None), help="JSON file with TrainConfig fields")
        p.add_argument("--seed", type=int, default=default(None))
        p.add_argument("--out", default=default("runs"), help="artifact directory")
        p.add_argument("-v", "--verbose", action="store_true", default=default(False))
        return p

    common = global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="dualtkg", parents=[global_flags(suppress=False)],
                                     description="Dual-view temporal knowledge graph extrapolation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", parents=[common], help="write a planted-rule dataset")
    p.add_argument("dataset")
    p.add_argument("--num-entities", type=int, default=100)
    p.add_argument("--num-relations", type=int, default=4)
    p.add_argument("--num-timestamps", type=int, default=60)
    p.add_argument("--active-pairs", type=int, default=20)
    p.add_argument("--episode-length", type=int, default=10)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("prepare", parents=[common], help="validate a dataset and write the manifest")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("mine-rules", parents=[common], help="mine one-hop temporal rules")
    _add_config_flags(p)
    p.set_defaults(func=cmd_mine_rules)

    p = sub.add_parser("train", parents=[common], help="train with early stopping")
    _add_config_flags(p)
    p.add_argument("--resume", action="store_true", help="continue from the saved checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="time-aware filtered MRR and Hits@k")
    _add_eval_flags(p)
    p.add_argument("--noise-sigma", type=float, default=0.0,
                   help="std of Gaussian noise added to base entity embeddings")
    p.add_argument("--output", default="metrics.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze-margins", parents=[common], help="pair-level margin statistics")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_analyze_margins)

    p = sub.add_parser("verify-theorem", parents=[common], help="closed-form and Monte-Carlo checks")
    p.add_argument("--grid", nargs="*", metavar="KEY=V1,V2",
                   help="override grid axes, e.g. --grid mu=1,2 rho=0,0.5")
    p.add_argument("--samples", type=int, default=0, help="Monte-Carlo samples per spec")
    p.add_argument("--boundary", action="store_true", help="also report rho = 1 points")
    p.set_defaults(func=cmd_verify_theorem)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        result = args.func(args)
    except MissingArtifact as exc:
        print(json.dumps({"error": str(exc), "missing": exc.path}), file=sys.stderr)
        return 2
    except (DatasetError, ValueError, KeyError, OSError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": message, "type": type(exc).__name__}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    if args.command == "verify-theorem" and not result["all_pass"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
