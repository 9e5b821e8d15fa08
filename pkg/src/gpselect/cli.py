"""Command-line entry point: synth, fit, rank and eval subcommands.

Exit codes: 0 success, 2 usage/validation error, 3 numerical or optimization
failure. Diagnostics go to stderr, data to stdout; all randomness flows from
--seed (omitting it picks a random seed which is echoed in the report).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .criteria import AscConfig
from .errors import EmptyData, GpSelectError, OptimizationFailed, SchemaError
from .gaussian import GaussianDist
from .harness import (
    ExperimentConfig,
    derived_seed,
    kernel_template,
    load_csv_dataset,
    package_versions,
    run_ranking,
    sample_synthetic,
    write_rank_csv,
    write_report,
)
from .kernels import KernelSpec, KernelStructure, MeanSpec
from .optimize import Criterion, ObjectiveSpec, optimize
from .regression import Dataset, GPModel, msll, predict

_KERNEL_CHOICES = [k.value for k in KernelStructure]
_CRITERION_CHOICES = [c.value for c in Criterion]


class UsageError(Exception):
    pass


def _teacher_from_flags(kernel, ell, sf, sn, alpha, period) -> GPModel:
    try:
        spec = KernelSpec.create(
            kernel, lengthscale=ell, signal=sf, noise=sn, alpha=alpha, period=period
        )
    except ValueError as err:
        raise UsageError(str(err)) from err
    return GPModel(MeanSpec(), spec)


def _resolve_seed(seed) -> int:
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().entropy % (2**63))


def _split_csv_list(raw: str | None) -> list[str] | None:
    if raw is None:
        return None
    items = [part.strip() for part in raw.split(",") if part.strip()]
    if not items:
        raise UsageError("empty column list")
    return items


def _resolve_input_columns(path, input_cols, output_col) -> list[str]:
    if input_cols is not None:
        return input_cols
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from err
    if not header:
        raise UsageError(f"{path} has no header row")
    return [c for c in header if c != output_col]


def _load(path, input_cols, output_col, shift=None, scale=None) -> Dataset:
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    cols = _resolve_input_columns(path, input_cols, output_col)
    return load_csv_dataset(path, cols, output_col, shift=shift, scale=scale)


def _write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        dim = data.X.shape[0]
        writer.writerow([f"x{i + 1}" for i in range(dim)] + ["y"])
        for j in range(data.n):
            writer.writerow([repr(float(v)) for v in data.X[:, j]] + [repr(float(data.y[j]))])


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    teacher = _teacher_from_flags(args.kernel, args.ell, args.sf, args.sn, args.alpha, args.period)
    if args.n_train < 1 or args.n_test < 0:
        raise UsageError("--n-train must be >= 1 and --n-test >= 0")
    train, test = sample_synthetic(
        teacher, args.n_train, args.n_test, (args.input_lo, args.input_hi), seed
    )
    out = Path(args.out)
    train_path = out.with_name(out.stem + "_train" + (out.suffix or ".csv"))
    test_path = out.with_name(out.stem + "_test" + (out.suffix or ".csv"))
    _write_dataset_csv(train, train_path)
    _write_dataset_csv(test, test_path)
    print(train_path)
    print(test_path)
    print(f"seed={seed}", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    seed = _resolve_seed(args.seed)
    input_cols = _split_csv_list(args.input_cols)
    train = _load(args.train, input_cols, args.output_col)
    criterion = Criterion(args.criterion)
    asc = None
    if criterion in (Criterion.BAYESIAN_ASC, Criterion.BETA_NOISE_ASC):
        asc = AscConfig(M=args.M, J=args.J, seed=derived_seed(seed, 1))
    template = GPModel(MeanSpec(), kernel_template(args.kernel))
    report = {
        "command": "fit",
        "criterion": criterion.value,
        "kernel": args.kernel,
        "train": str(args.train),
        "n_train": train.n,
        "skipped_rows": train.meta.get("skipped_rows", 0),
        "input_columns": train.meta.get("input_columns"),
        "output_column": train.meta.get("output_column"),
        "input_standardization": {
            "shift": train.meta.get("input_shift"),
            "scale": train.meta.get("input_scale"),
        },
        "restarts": args.restarts,
        "seed": seed,
        "asc": {"J": args.J, "M": args.M} if asc is not None else None,
        "versions": package_versions(),
    }
    try:
        result = optimize(ObjectiveSpec(criterion, asc), template, train, args.restarts, seed)
    except OptimizationFailed as err:
        report["error"] = str(err)
        if args.out:
            write_report(report, args.out)
        print(f"optimization failed: {err}", file=sys.stderr)
        return 3
    fitted = template.kernel.with_theta(result.theta)
    report.update(
        {
            "theta_log": [float(v) for v in result.theta],
            "params": fitted.named_params(),
            "kernel_spec": {
                "structure": fitted.structure.value,
                "log_params": [float(v) for v in fitted.log_params],
                "log_noise": float(fitted.log_noise),
            },
            "objective_value": result.objective_value,
            "converged": result.converged,
            "failed_partition_fraction": result.failed_partition_fraction,
        }
    )
    if args.out:
        write_report(report, args.out)
    print(json.dumps({"criterion": criterion.value, "objective_value": result.objective_value}))
    return 0


def cmd_rank(args) -> int:
    seed = _resolve_seed(args.seed)
    students = _split_csv_list(args.students)
    criteria = _split_csv_list(args.criteria)
    for name in criteria:
        if name not in _CRITERION_CHOICES:
            raise UsageError(f"unknown criterion {name!r}; valid: {_CRITERION_CHOICES}")
    for name in students:
        if name not in _KERNEL_CHOICES:
            raise UsageError(f"unknown kernel {name!r}; valid: {_KERNEL_CHOICES}")
    teacher = None
    data = None
    if args.data is not None and args.teacher_kernel is not None:
        raise UsageError("give either --teacher-kernel (synthetic) or --data (real), not both")
    if args.data is not None:
        data = _load(args.data, _split_csv_list(args.input_cols), args.output_col)
    elif args.teacher_kernel is not None:
        teacher = _teacher_from_flags(
            args.teacher_kernel, args.ell, args.sf, args.sn, args.alpha, args.period
        )
    else:
        raise UsageError("one of --teacher-kernel or --data is required")
    try:
        cfg = ExperimentConfig(
            students=tuple(students),
            criteria=tuple(criteria),
            replicates=args.replicates,
            n_train=args.n_train,
            n_test=args.n_test,
            asc=AscConfig(M=args.M, J=args.J, seed=derived_seed(seed, 3)),
            seed=seed,
            teacher=teacher,
            data=data,
            fit_criterion=args.fit_criterion,
            restarts=args.restarts,
            input_range=(args.input_lo, args.input_hi),
            threads=args.threads,
        )
    except ValueError as err:
        raise UsageError(str(err)) from err
    report = run_ranking(cfg)
    echo = {
        "command": "rank",
        "students": students,
        "criteria": criteria,
        "fit_criterion": args.fit_criterion,
        "replicates": args.replicates,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "asc": {"J": args.J, "M": args.M},
        "seed": seed,
        "restarts": args.restarts,
        "threads": args.threads,
        "teacher": None
        if teacher is None
        else {"kernel": args.teacher_kernel, "params": teacher.kernel.named_params()},
        "data": None if data is None else data.meta,
    }
    out = Path(args.out)
    json_path = out.with_suffix(".json")
    csv_path = out.with_suffix(".csv")
    write_report(report.to_dict(config_echo=echo), json_path)
    write_rank_csv(report, csv_path)
    print(json_path)
    print(csv_path)
    return 0


def cmd_eval(args) -> int:
    if (args.model is None) == (not args.trivial):
        raise UsageError("give exactly one of --model or --trivial")
    input_cols = _split_csv_list(args.input_cols)
    if args.trivial:
        train = _load(args.train, input_cols, args.output_col)
        test = _load(args.test, input_cols, args.output_col)
        base_mean = float(np.mean(train.y))
        base_var = float(np.var(train.y))
        predictive = GaussianDist.from_moments(
            np.full(test.n, base_mean), base_var * np.eye(test.n)
        )
        value = msll(predictive, test.y, train.y)
        model_desc = "trivial"
    else:
        if not Path(args.model).is_file():
            raise UsageError(f"file not found: {args.model}")
        with open(args.model, encoding="utf-8") as fh:
            fitted = json.load(fh)
        if "kernel_spec" not in fitted:
            raise UsageError(f"{args.model} does not contain a fitted kernel")
        spec = fitted["kernel_spec"]
        kernel = KernelSpec(
            KernelStructure(spec["structure"]),
            np.asarray(spec["log_params"], dtype=float),
            float(spec["log_noise"]),
        )
        std = fitted.get("input_standardization") or {}
        shift, scale = std.get("shift"), std.get("scale")
        train = _load(args.train, input_cols, args.output_col, shift=shift, scale=scale)
        test = _load(args.test, input_cols, args.output_col, shift=shift, scale=scale)
        model = GPModel(MeanSpec(), kernel)
        predictive = predict(model, train, test.X)
        value = msll(predictive, test.y, train.y)
        model_desc = str(args.model)
    print(repr(value))
    if args.out:
        write_report(
            {
                "command": "eval",
                "model": model_desc,
                "msll": value,
                "n_train": train.n,
                "n_test": test.n,
                "versions": package_versions(),
            },
            args.out,
        )
    return 0


def _add_teacher_flags(parser, kernel_flag: str):
    parser.add_argument(kernel_flag, choices=_KERNEL_CHOICES, default=None)
    parser.add_argument("--ell", type=float, default=1.0, help="lengthscale")
    parser.add_argument("--sf", type=float, default=1.0, help="signal std")
    parser.add_argument("--sn", type=float, default=0.1, help="noise std")
    parser.add_argument("--alpha", type=float, default=None, help="rq shape")
    parser.add_argument("--period", type=float, default=None, help="per period")
    parser.add_argument("--input-lo", type=float, default=0.0)
    parser.add_argument("--input-hi", type=float, default=10.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpselect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw a teacher dataset to CSV files")
    _add_teacher_flags(p, "--kernel")
    p.add_argument("--n-train", type=int, default=64)
    p.add_argument("--n-test", type=int, default=256)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("fit", help="optimize one kernel under one criterion")
    p.add_argument("--train", required=True)
    p.add_argument("--kernel", choices=_KERNEL_CHOICES, required=True)
    p.add_argument("--criterion", choices=_CRITERION_CHOICES, required=True)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--J", type=int, default=32)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--input-cols", default=None, help="comma-separated input columns")
    p.add_argument("--output-col", default="y")
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("rank", help="teacher-student or real-data kernel ranking")
    _add_teacher_flags(p, "--teacher-kernel")
    p.add_argument("--data", default=None, help="real dataset CSV")
    p.add_argument("--input-cols", default=None)
    p.add_argument("--output-col", default="y")
    p.add_argument("--students", default="se,rq,exp,per")
    p.add_argument("--criteria", default="evidence,loo,basc,bnasc")
    p.add_argument("--fit-criterion", choices=["evidence", "loo"], default="evidence")
    p.add_argument("--replicates", type=int, default=16)
    p.add_argument("--n-train", type=int, default=64)
    p.add_argument("--n-test", type=int, default=256)
    p.add_argument("--J", type=int, default=32)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix for .json/.csv")
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("eval", help="mean standardized log loss of a fitted model")
    p.add_argument("--model", default=None, help="fit report JSON")
    p.add_argument("--trivial", action="store_true", help="score the trivial baseline")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--input-cols", default=None)
    p.add_argument("--output-col", default="y")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return args.handler(args)
    except (UsageError, ValueError, SchemaError, EmptyData) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OptimizationFailed as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except GpSelectError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


def app() -> None:
    raise SystemExit(main())
