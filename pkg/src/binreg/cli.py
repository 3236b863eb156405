"""Command line pipeline: ingest -> corrupt -> encode -> solve -> report.

Subcommands: train, eval, export, render, bench.  Every artifact is plain
JSON/CSV/PGM; runs are reproducible bit for bit given the same flags and
seed (runtime fields excluded).  Exit codes: 0 a model was produced, 2
usage or input error, 3 the solver produced no incumbent.

The environment variable BINREG_LOG enables solver progress lines on
stderr: its value is the logging interval in seconds (0 or unset disables).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

from .branch_bound import MipResult, SolveConfig, solve
from .dataset import (
    BinaryDataset,
    CorruptionSpec,
    SplitSpec,
    binarize,
    corrupt_labels,
    corruption_count,
    load_csv,
    load_idx,
    split,
    write_csv,
)
from .emitters import (
    load_model,
    render_weights_pgm,
    save_model,
    write_lp,
    write_mps,
    write_opb,
)
from .encoder import (
    EncodingLayout,
    Hyperparams,
    TrainedModel,
    build_mip,
    build_pbo,
    decode_solution,
    make_rounding_heuristic,
)
from .evaluator import EvalReport, accuracy
from .model_ir import ModelIR

__all__ = ["RunConfig", "main"]


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one training (or export) pipeline run."""

    images: str | None = None
    labels: str | None = None
    csv: str | None = None
    k: int | None = None
    alpha: Fraction = Fraction(2)
    beta: Fraction | None = None
    corrupt: Fraction = Fraction(0)
    seed: int = 0
    time_limit: float = 3600.0
    mode: str = "mip"
    out: str = "."

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.alpha, self.beta)


def _log_interval() -> float:
    raw = os.environ.get("BINREG_LOG", "")
    if not raw:
        return 0.0
    try:
        return max(0.0, float(raw))
    except ValueError:
        return 5.0


def _load_dataset(cfg: RunConfig) -> BinaryDataset:
    if cfg.csv is not None:
        if cfg.images is not None or cfg.labels is not None:
            raise UsageError("give either --csv or --images/--labels, not both")
        return load_csv(cfg.csv)
    if cfg.images is None or cfg.labels is None:
        raise UsageError("dataset required: --csv FILE or --images FILE --labels FILE")
    return binarize(load_idx(cfg.images, cfg.labels))


def _prepare(cfg: RunConfig) -> tuple[BinaryDataset, BinaryDataset | None, int]:
    """Load, split off the training part and corrupt its labels.

    Returns (training set, held-out set or None, corrupted label count).
    """
    full = _load_dataset(cfg)
    if cfg.k is not None and cfg.k < len(full):
        train, test = split(full, SplitSpec(cfg.k, cfg.seed))
    else:
        train, test = full, None
    changed = corruption_count(Fraction(cfg.corrupt), len(train))
    train = corrupt_labels(train, CorruptionSpec(cfg.corrupt, cfg.seed))
    return train, test, changed


def _encode(cfg: RunConfig, train: BinaryDataset) -> tuple[ModelIR, EncodingLayout]:
    builder = build_mip if cfg.mode == "mip" else build_pbo
    return builder(train, cfg.hyperparams())


@dataclass
class PipelineOutcome:
    result: MipResult
    model: TrainedModel | None
    train_set: BinaryDataset
    test_set: BinaryDataset | None
    train_report: EvalReport | None
    test_report: EvalReport | None
    corrupted_labels: int


def run_pipeline(cfg: RunConfig) -> PipelineOutcome:
    train, test, changed = _prepare(cfg)
    ir, layout = _encode(cfg, train)
    res = solve(
        ir,
        SolveConfig(
            time_limit_secs=cfg.time_limit,
            seed=cfg.seed,
            log_interval_secs=_log_interval(),
        ),
        heuristic=make_rounding_heuristic(layout, train),
    )
    model = None
    train_report = None
    test_report = None
    if res.incumbent is not None:
        model = decode_solution(layout, res.incumbent)
        train_report = accuracy(model, train)
        if test is not None and len(test):
            test_report = accuracy(model, test)
    return PipelineOutcome(res, model, train, test, train_report, test_report, changed)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finite(value: float) -> float | None:
    return value if math.isfinite(value) else None


def result_json_dict(cfg: RunConfig, out: PipelineOutcome) -> dict:
    """Solve/report fields; runtime_secs and bound_trace vary run to run,
    everything else is a pure function of the flags and seed."""
    res = out.result
    hp = cfg.hyperparams()
    return {
        "status": res.status,
        "objective": res.objective,
        "objective_scale": hp.scaled()[2],
        "bound": _finite(res.bound),
        "gap": _finite(res.gap),
        "nodes": res.nodes,
        "runtime_secs": res.runtime_secs,
        "bound_trace": [[t, b] for t, b in res.bound_trace],
        "alpha": str(hp.alpha),
        "beta": str(hp.beta),
        "mode": cfg.mode,
        "seed": cfg.seed,
        "k": len(out.train_set),
        "corrupted_labels": out.corrupted_labels,
    }


# -- subcommands -------------------------------------------------------------


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        images=args.images,
        labels=args.labels,
        csv=args.csv,
        k=args.k,
        alpha=args.alpha,
        beta=args.beta,
        corrupt=args.corrupt,
        seed=args.seed,
        time_limit=args.time_limit,
        mode=args.mode,
        out=args.out,
    )


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    out = run_pipeline(cfg)
    _write_json(os.path.join(cfg.out, "result.json"), result_json_dict(cfg, out))
    write_csv(out.train_set, os.path.join(cfg.out, "train.csv"))
    if out.model is None:
        print(f"no incumbent found: status {out.result.status}", file=sys.stderr)
        return 3
    save_model(out.model, os.path.join(cfg.out, "model.json"))
    _write_json(
        os.path.join(cfg.out, "train_report.json"), out.train_report.to_json_dict()
    )
    if out.test_report is not None:
        _write_json(
            os.path.join(cfg.out, "test_report.json"), out.test_report.to_json_dict()
        )
    summary = {
        "status": out.result.status,
        "objective": out.result.objective,
        "gap": _finite(out.result.gap),
        "train_accuracy": float(out.train_report.accuracy),
        "test_accuracy": (
            float(out.test_report.accuracy) if out.test_report is not None else None
        ),
        "out": cfg.out,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    model = load_model(args.model)
    report = accuracy(model, _load_dataset(cfg))
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return 0


_FORMAT_WRITERS = {"lp": write_lp, "mps": write_mps, "opb": write_opb}


def cmd_export(args) -> int:
    cfg = _config_from_args(args)
    train, _, _ = _prepare(cfg)
    ir, _ = _encode(cfg, train)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"model.{args.format}")
    _FORMAT_WRITERS[args.format](ir, path)
    print(path)
    return 0


def cmd_render(args) -> int:
    model = load_model(args.model)
    width, height = args.width, args.height
    if (width is None) != (height is None):
        raise UsageError("--width and --height must be given together")
    if width is None:
        side = math.isqrt(model.F_size)
        if side * side != model.F_size:
            raise UsageError(
                f"F_size {model.F_size} is not square; give --width and --height"
            )
        width = height = side
    os.makedirs(args.out, exist_ok=True)
    for c in range(model.C_size):
        render_weights_pgm(
            model, c, width, height, os.path.join(args.out, f"class_{c}.pgm")
        )
    print(args.out)
    return 0


BENCH_HEADER = [
    "model",
    "dataset",
    "instances",
    "gap",
    "time_secs",
    "reduction_pct",
    "train_accuracy",
    "test_accuracy",
]

_BENCH_KEYS = {
    "name",
    "images",
    "labels",
    "csv",
    "k",
    "alpha",
    "beta",
    "corrupt",
    "seed",
    "time_limit",
    "mode",
}


def _bench_config(entry: dict) -> tuple[str, RunConfig]:
    unknown = set(entry) - _BENCH_KEYS
    if unknown:
        raise UsageError(f"unknown bench entry keys: {sorted(unknown)}")
    if "name" not in entry:
        raise UsageError("bench entry missing 'name'")
    cfg = RunConfig(
        images=entry.get("images"),
        labels=entry.get("labels"),
        csv=entry.get("csv"),
        k=entry.get("k"),
        alpha=Fraction(str(entry.get("alpha", 2))),
        beta=(
            Fraction(str(entry["beta"])) if entry.get("beta") is not None else None
        ),
        corrupt=Fraction(str(entry.get("corrupt", 0))),
        seed=int(entry.get("seed", 0)),
        time_limit=float(entry.get("time_limit", 3600.0)),
        mode=str(entry.get("mode", "mip")),
    )
    if cfg.mode not in ("mip", "pbo"):
        raise UsageError(f"bench entry mode must be mip or pbo, got {cfg.mode!r}")
    return str(entry["name"]), cfg


def _bench_figure(rows: list[dict], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [f"{r['model']} {r['dataset']} k={r['instances']}" for r in rows]
    xs = range(len(rows))
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(max(6, 1.6 * len(rows)), 7), sharex=True
    )
    top.bar(xs, [r["reduction_pct"] for r in rows], color="dimgray")
    top.set_ylabel("weights at zero (%)")
    top.set_ylim(0, 100)
    width = 0.38
    bottom.bar(
        [x - width / 2 for x in xs],
        [r["train_accuracy"] for r in rows],
        width,
        label="train",
        color="steelblue",
    )
    test_pairs = [
        (x, r["test_accuracy"]) for x, r in zip(xs, rows) if r["test_accuracy"] != ""
    ]
    if test_pairs:
        bottom.bar(
            [x + width / 2 for x, _ in test_pairs],
            [a for _, a in test_pairs],
            width,
            label="test",
            color="darkorange",
        )
    bottom.set_ylabel("accuracy")
    bottom.set_ylim(0, 1)
    bottom.set_xticks(list(xs))
    bottom.set_xticklabels(labels, rotation=30, ha="right")
    bottom.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_bench(args) -> int:
    with open(args.spec, "r", encoding="ascii") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise UsageError("bench spec must be a non-empty JSON list")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for entry in entries:
        name, cfg = _bench_config(entry)
        out = run_pipeline(cfg)
        if out.model is None:
            print(
                f"bench entry {name!r}: no incumbent (status {out.result.status})",
                file=sys.stderr,
            )
            return 3
        rows.append(
            {
                "model": cfg.mode.upper(),
                "dataset": name,
                "instances": len(out.train_set),
                "gap": out.result.gap,
                "time_secs": out.result.runtime_secs,
                "reduction_pct": float(out.train_report.reduction_pct),
                "train_accuracy": float(out.train_report.accuracy),
                "test_accuracy": (
                    float(out.test_report.accuracy)
                    if out.test_report is not None
                    else ""
                ),
            }
        )
    csv_path = os.path.join(args.out, "bench.csv")
    with open(csv_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(BENCH_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(str(row[key]) for key in BENCH_HEADER) + "\n")
    _bench_figure(rows, os.path.join(args.out, "bench.png"))
    print(csv_path)
    return 0


# -- argument parsing --------------------------------------------------------


def _add_dataset_flags(sub) -> None:
    sub.add_argument("--images", help="IDX image file (pairs with --labels)")
    sub.add_argument("--labels", help="IDX label file (pairs with --images)")
    sub.add_argument("--csv", help="CSV dataset: F binary columns then a label")


def _add_run_flags(sub) -> None:
    _add_dataset_flags(sub)
    sub.add_argument("--k", type=int, help="training instances (rest held out)")
    sub.add_argument(
        "--alpha", type=Fraction, default=Fraction(2), help="margin reward (default 2)"
    )
    sub.add_argument(
        "--beta", type=Fraction, default=None, help="margin penalty (default 2*alpha)"
    )
    sub.add_argument(
        "--corrupt",
        type=Fraction,
        default=Fraction(0),
        help="fraction of training labels to corrupt (default 0)",
    )
    sub.add_argument("--seed", type=int, default=0, help="split/corruption seed")
    sub.add_argument(
        "--time-limit",
        type=float,
        default=3600.0,
        dest="time_limit",
        help="solver time limit in seconds (default 3600)",
    )
    sub.add_argument(
        "--mode", choices=("mip", "pbo"), default="mip", help="encoding (default mip)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binreg",
        description="Train and inspect ternary-weight linear classifiers "
        "by exact integer optimization.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="train a model and write artifacts")
    _add_run_flags(train)
    train.add_argument("--out", default="out", help="output directory (default out)")
    train.set_defaults(func=cmd_train)

    evalp = subs.add_parser("eval", help="evaluate a saved model on a dataset")
    evalp.add_argument("--model", required=True, help="model.json path")
    _add_run_flags(evalp)
    evalp.add_argument("--out", default=".", help=argparse.SUPPRESS)
    evalp.set_defaults(func=cmd_eval)

    export = subs.add_parser("export", help="write the training program to a file")
    _add_run_flags(export)
    export.add_argument("--format", choices=("lp", "mps", "opb"), required=True)
    export.add_argument("--out", default=".", help="output directory (default .)")
    export.set_defaults(func=cmd_export)

    render = subs.add_parser("render", help="render weight maps as PGM images")
    render.add_argument("--model", required=True, help="model.json path")
    render.add_argument("--width", type=int, help="pixels per row")
    render.add_argument("--height", type=int, help="pixel rows")
    render.add_argument("--out", default="out", help="output directory (default out)")
    render.set_defaults(func=cmd_render)

    bench = subs.add_parser("bench", help="run a suite and tabulate the results")
    bench.add_argument("--spec", required=True, help="JSON list of run entries")
    bench.add_argument("--out", default="out", help="output directory (default out)")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
