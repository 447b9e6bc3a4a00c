"""Command-line entry points: gen, train, eval, compare.

Exit codes: 0 success, 2 usage error, 3 data error (missing or malformed
files, bad config values), 4 numeric abort during training.

Configuration files are UTF-8 ``key=value`` lines; blank lines and lines
starting with ``#`` are ignored; unknown keys are errors. Command-line
flags override file values.
"""

import argparse
import os
import sys

from . import harness, kernels, synth
from .errors import DataError, NumericError
from .pgm import ImageCache
from .selection import SelectionConfig
from .trainer import AugmentRecipe, TrainConfig, load_params

_STRATEGY_ALIASES = {
    "full": "baseline_full",
    "hem": "baseline_hem",
    "iem": "iem_incremental",
    "naive": "naive_finetune",
}

_BOOL_VALUES = {
    "1": True, "true": True, "yes": True,
    "0": False, "false": False, "no": False,
}


def _parse_bool(text):
    try:
        return _BOOL_VALUES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {text!r}") from None


CONFIG_KEYS = {
    "K": int,
    "d": int,
    "t": int,
    "iterations_per_step": int,
    "seed": int,
    "tau": float,
    "binarize_threshold": float,
    "variant": str,
    "error_weight_fp": float,
    "error_weight_fn": float,
    "error_weight_ji": float,
    "learning_rate": float,
    "epochs_per_iteration": int,
    "jitter": float,
    "horizontal_flip": _parse_bool,
    "vertical_flip": _parse_bool,
}


def read_config_file(path):
    """Parse a key=value config file into typed settings."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key not in CONFIG_KEYS:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise DataError(f"{path}:{lineno}: duplicate config key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_settings(config_path, seed=None, tau=None, variant=None):
    values = read_config_file(config_path) if config_path else {}
    if seed is not None:
        values["seed"] = seed
    if tau is not None:
        values["tau"] = tau
    if variant is not None:
        values["variant"] = variant
    return values


def make_configs(values):
    """Build (SelectionConfig, TrainConfig) from typed settings."""
    sel_kwargs = {
        name: values[name]
        for name in ("K", "d", "t", "iterations_per_step", "tau", "variant",
                     "binarize_threshold", "seed")
        if name in values
    }
    sel_kwargs["error_weights"] = (
        values.get("error_weight_fp", 1.0),
        values.get("error_weight_fn", 1.0),
        values.get("error_weight_ji", 1.0),
    )
    try:
        recipe = AugmentRecipe(
            horizontal_flip=values.get("horizontal_flip", True),
            vertical_flip=values.get("vertical_flip", True),
            jitter=values.get("jitter", 0.1),
        )
        selcfg = SelectionConfig(**sel_kwargs)
        traincfg = TrainConfig(
            learning_rate=values.get("learning_rate", 0.5),
            epochs_per_iteration=values.get("epochs_per_iteration", 1),
            recipe=recipe,
        )
    except ValueError as exc:
        raise DataError(f"bad configuration: {exc}") from exc
    return selcfg, traincfg


def cmd_gen(args):
    scenario = synth.default_scenario(args.seed)
    train_chunks, test_records = synth.generate_scenario(scenario, args.out)
    sizes = [len(chunk) for chunk in train_chunks]
    print(f"wrote {sum(sizes)} train images in chunks {sizes} "
          f"and {len(test_records)} test images under {args.out}")
    return 0


def cmd_train(args):
    strategy = _STRATEGY_ALIASES.get(args.strategy, args.strategy)
    selcfg, traincfg = make_configs(
        load_settings(args.config, args.seed, args.tau, args.variant)
    )
    train_chunks, test_records = harness.load_dataset(args.data)
    cache = ImageCache()
    for chunk in train_chunks:
        synth.verify_labels(chunk, cache)
    synth.verify_labels(test_records, cache)
    kernels.warmup()
    report, params, pool, trace = harness.run_strategy(
        strategy, train_chunks, test_records, selcfg, traincfg, cache
    )
    out_dir = os.path.join(args.out, strategy)
    harness.write_strategy_outputs(out_dir, report, params, pool, trace)
    row = report.final_row()
    print(f"{strategy}: stage {row.stage} precision={row.precision:.4f} "
          f"recall={row.recall:.4f} f1={row.f1:.4f} jaccard={row.jaccard:.4f} "
          f"({row.examples_trained} presentations, {row.seconds:.2f}s); "
          f"outputs in {out_dir}")
    return 0


def cmd_eval(args):
    params = load_params(args.checkpoint)
    records = synth.read_manifest(args.test)
    selcfg, _ = make_configs(
        load_settings(args.config, None, args.tau, args.variant)
    )
    kernels.warmup()
    precision, recall, f1, jaccard = harness.evaluate_model(
        params, records, selcfg, ImageCache()
    )
    print("precision,recall,f1,jaccard")
    print(f"{precision:.6f},{recall:.6f},{f1:.6f},{jaccard:.6f}")
    return 0


def cmd_compare(args):
    if len(args.reports) < 2:
        print("error: compare needs at least two report files", file=sys.stderr)
        return 2
    reports = []
    timings = {}
    for path in args.reports:
        reports.append(harness.read_report_fragment(path))
        sidecar = os.path.join(os.path.dirname(os.path.abspath(path)),
                               harness.TIMINGS_NAME)
        if os.path.isfile(sidecar):
            timings.update(harness.read_timings(sidecar))
    merged = harness.merge_reports(reports, timings)
    print(harness.final_stage_table(merged))
    csv_text = harness.comparison_csv(merged)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"full comparison written to {args.out}")
    else:
        print()
        print(csv_text, end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="iem",
        description="incremental example mining on synthetic lesion streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate the default scenario dataset")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train one strategy on a dataset")
    p_train.add_argument(
        "--strategy", required=True,
        choices=sorted(set(harness.STRATEGIES) | set(_STRATEGY_ALIASES)),
    )
    p_train.add_argument("--data", required=True, help="dataset directory from gen")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--config", default=None, help="key=value config file")
    p_train.add_argument("--tau", type=float, default=None)
    p_train.add_argument("--variant", choices=("full", "loss_ji"), default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--test", required=True, help="test manifest path")
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--tau", type=float, default=None)
    p_eval.add_argument("--variant", choices=("full", "loss_ji"), default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="merge strategy reports into a table")
    p_cmp.add_argument("reports", nargs="+", help="report fragment CSVs")
    p_cmp.add_argument("--out", default=None, help="write full CSV here")
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
