"""Command-line front end: train, cost, compare, export-features."""
from __future__ import annotations

import argparse
import json
import sys

from . import scheduler
from .config import (ConfigError, apply_preset, build_experiment_config,
                     read_config_file, PRESET_NAMES)
from .datasets import Dataset, DatasetError, load_csv, load_idx
from .harness import (HarnessError, compare, export_features, load_dataset,
                      load_params, run_experiment_with_params, training_population,
                      write_run_outputs)


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--preset", choices=PRESET_NAMES,
                        help="overlay a named drop/refresh schedule")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                        help="override one config key (repeatable)")


def _resolve_config(args: argparse.Namespace):
    values = read_config_file(args.config)
    if args.preset:
        values = apply_preset(values, args.preset)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        values["run.seed"] = str(args.seed)
    if getattr(args, "out", None) is not None:
        values["run.out_dir"] = args.out
    return build_experiment_config(values)


def _fmt(value) -> str:
    return "n/a" if value is None else repr(value)


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    report, params = run_experiment_with_params(cfg)
    wrote = "-"
    if cfg.out_dir is not None:
        paths = write_run_outputs(cfg.out_dir, report, params)
        wrote = str(paths["metrics"].parent)
    print(f"policy={cfg.policy} epochs={cfg.total_epochs} seed={cfg.run_seed} "
          f"realized_cost={report.realized_cost_ratio!r} "
          f"final_val_acc={_fmt(report.final_validation_accuracy)} out={wrote}")
    return 0


def _cmd_cost(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    population = training_population(cfg)
    rows = scheduler.trace(cfg.dar, population)
    for line in scheduler.trace_csv_lines(rows):
        print(line)
    ratio = sum(row.size for row in rows) / (cfg.total_epochs * population)
    print(repr(ratio))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    paths = [p for p in args.configs.split(",") if p]
    cfgs = [build_experiment_config(read_config_file(p)) for p in paths]
    rows = compare(cfgs)
    print("label,cost_ratio,final_accuracy,delta_accuracy")
    for row in rows:
        delta = "n/a" if row.delta_accuracy is None else f"{row.delta_accuracy:+.6f}"
        acc = "n/a" if row.final_accuracy is None else f"{row.final_accuracy:.6f}"
        print(f"{row.label},{row.cost_ratio!r},{acc},{delta}")
    if args.out is not None:
        payload = [{"label": r.label, "cost_ratio": r.cost_ratio,
                    "final_accuracy": r.final_accuracy,
                    "delta_accuracy": r.delta_accuracy} for r in rows]
        with open(args.out, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def _dataset_from_spec(spec: str) -> Dataset:
    kind, _, rest = spec.partition(":")
    if kind == "csv" and rest:
        return load_csv(rest)
    if kind == "idx":
        images, _, labels = rest.partition(",")
        if not images or not labels:
            raise ConfigError("idx data spec is idx:<image-file>,<label-file>")
        return load_idx(images, labels)
    if kind == "config" and rest:
        cfg = build_experiment_config(read_config_file(rest))
        train_set, _ = load_dataset(cfg.data, cfg.run_seed)
        return train_set
    raise ConfigError(
        f"--data must be csv:<file>, idx:<images>,<labels>, or config:<file>; got {spec!r}")


def _cmd_export_features(args: argparse.Namespace) -> int:
    params = load_params(args.model)
    dataset = _dataset_from_spec(args.data)
    export_features(params, dataset, args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dropfresh",
        description="Train small classifiers under drop-and-refresh sampling schedules.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one experiment")
    _add_config_options(p_train)
    p_train.add_argument("--seed", type=int, help="override run.seed")
    p_train.add_argument("--out", help="override run.out_dir")
    p_train.set_defaults(func=_cmd_train)

    p_cost = sub.add_parser("cost", help="print the planned schedule and its cost ratio")
    _add_config_options(p_cost)
    p_cost.set_defaults(func=_cmd_cost)

    p_cmp = sub.add_parser("compare", help="run several configs and tabulate results")
    p_cmp.add_argument("--configs", required=True,
                       help="comma-separated config files (first is the reference)")
    p_cmp.add_argument("--out", help="also write the table as JSON")
    p_cmp.set_defaults(func=_cmd_compare)

    p_exp = sub.add_parser("export-features",
                           help="write per-example embeddings from a saved model")
    p_exp.add_argument("--model", required=True, help="saved model .bin file")
    p_exp.add_argument("--data", required=True,
                       help="csv:<file> | idx:<images>,<labels> | config:<file>")
    p_exp.add_argument("--out", required=True, help="output CSV path")
    p_exp.set_defaults(func=_cmd_export_features)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, HarnessError, ValueError, OSError) as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
