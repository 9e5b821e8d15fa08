"""Experiment orchestration: synthetic teachers, kernel ranking, CSV ingestion.

A ranking experiment fits every student kernel on the training half of each
replicate under one designated criterion, then scores the fitted models under
all requested criteria plus held-out test loss, and aggregates per-criterion
mean ranks with normal-approximation confidence intervals. Replicates are
independent jobs seeded from the master seed, so threaded execution cannot
change the report.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np
from scipy.stats import rankdata

from .criteria import AscConfig, sample_partitions
from .errors import EmptyData, GpSelectError, OptimizationFailed, SchemaError
from .gaussian import chol_spd
from .kernels import PARAM_NAMES, KernelSpec, KernelStructure, MeanSpec, kernel_matrix, mean_vector
from .optimize import Criterion, ObjectiveSpec, evaluate_criterion, optimize
from .regression import Dataset, GPModel, msll, predict

MSLL_COLUMN = "msll"

# Ranking columns where a larger score is better.
_HIGHER_BETTER = {
    Criterion.EVIDENCE.value: True,
    Criterion.LOO.value: False,
    Criterion.BAYESIAN_ASC.value: True,
    Criterion.BETA_NOISE_ASC.value: True,
    MSLL_COLUMN: False,
}


def derived_seed(master: int, *key: int) -> int:
    """Deterministic child seed for a (master seed, index path) pair."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def kernel_template(structure: KernelStructure | str) -> KernelSpec:
    """Placeholder spec for a structure; the optimizer overwrites the values."""
    structure = KernelStructure(structure)
    return KernelSpec(structure, np.zeros(len(PARAM_NAMES[structure])), 0.0)


@dataclass(frozen=True)
class ExperimentConfig:
    students: tuple[KernelStructure, ...]
    criteria: tuple[Criterion, ...]
    replicates: int = 16
    n_train: int = 64
    n_test: int = 256
    asc: AscConfig = field(default_factory=AscConfig)
    seed: int = 0
    teacher: GPModel | None = None
    data: Dataset | None = None
    fit_criterion: Criterion = Criterion.EVIDENCE
    restarts: int = 2
    input_range: tuple[float, float] = (0.0, 10.0)
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "students", tuple(KernelStructure(s) for s in self.students))
        object.__setattr__(self, "criteria", tuple(Criterion(c) for c in self.criteria))
        object.__setattr__(self, "fit_criterion", Criterion(self.fit_criterion))
        if not self.students:
            raise ValueError("need at least one student kernel")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if self.n_train < 2 * self.asc.M:
            raise ValueError(f"n_train={self.n_train} too small for M={self.asc.M}")
        if self.fit_criterion not in (Criterion.EVIDENCE, Criterion.LOO):
            raise ValueError("hyperparameters are fitted by evidence or leave-one-out only")
        if (self.teacher is None) == (self.data is None):
            raise ValueError("exactly one of teacher (synthetic) or data (real) must be set")

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(c.value for c in self.criteria) + (MSLL_COLUMN,)


def sample_function_values(model: GPModel, x, rng) -> np.ndarray:
    """One joint draw of latent function values at the given inputs."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    factor, _ = chol_spd(kernel_matrix(model.kernel, x, x), "prior covariance")
    return mean_vector(model.mean, x) + factor @ rng.standard_normal(x.shape[1])


def sample_synthetic(
    teacher: GPModel,
    n_train: int,
    n_test: int,
    input_range: tuple[float, float] = (0.0, 10.0),
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Teacher draw: uniform 1-D inputs, joint latent sample, additive noise."""
    rng = np.random.default_rng(seed)
    total = n_train + n_test
    x = rng.uniform(input_range[0], input_range[1], size=(1, total))
    f = sample_function_values(teacher, x, rng)
    sigma_n = float(np.exp(teacher.kernel.log_noise))
    y = f + sigma_n * rng.standard_normal(total)
    train = Dataset(x[:, :n_train], y[:n_train])
    test = Dataset(x[:, n_train:], y[n_train:])
    return train, test


@dataclass(frozen=True)
class ReplicateResult:
    scores: dict
    ranks: dict
    test_msll: dict
    theta: dict
    fit_failures: tuple[str, ...]
    asc_failed_fraction: dict

    def to_dict(self) -> dict:
        return {
            "scores": self.scores,
            "ranks": self.ranks,
            "test_msll": self.test_msll,
            "theta": self.theta,
            "fit_failures": list(self.fit_failures),
            "asc_failed_fraction": self.asc_failed_fraction,
        }


def _midranks(values, higher_better: bool) -> np.ndarray:
    """Best-first average ranks; missing scores count as worst."""
    arr = np.asarray(values, dtype=float)
    worst = -np.inf if higher_better else np.inf
    arr = np.where(np.isnan(arr), worst, arr)
    return rankdata(-arr if higher_better else arr, method="average")


def rank_students(cfg: ExperimentConfig, train: Dataset, test: Dataset, seed=None) -> ReplicateResult:
    """Fit and score all student kernels on one train/test replicate."""
    base = cfg.seed if seed is None else seed
    parts = sample_partitions(
        train.n, AscConfig(M=cfg.asc.M, J=cfg.asc.J, seed=derived_seed(base, 1))
    )
    names = [s.value for s in cfg.students]
    scores: dict = {col: {} for col in cfg.columns}
    asc_fracs: dict = {}
    thetas: dict = {}
    failures = []
    for si, structure in enumerate(cfg.students):
        name = structure.value
        template = GPModel(MeanSpec(), kernel_template(structure))
        try:
            fit = optimize(
                ObjectiveSpec(cfg.fit_criterion),
                template,
                train,
                cfg.restarts,
                derived_seed(base, 2, si),
            )
        except OptimizationFailed:
            failures.append(name)
            for col in cfg.columns:
                scores[col][name] = float("nan")
            thetas[name] = None
            continue
        model = GPModel(MeanSpec(), template.kernel.with_theta(fit.theta))
        thetas[name] = [float(v) for v in fit.theta]
        for crit in cfg.criteria:
            try:
                value, asc = evaluate_criterion(crit, model, train, parts)
            except GpSelectError:
                value, asc = float("nan"), None
            scores[crit.value][name] = float(value)
            if asc is not None:
                asc_fracs.setdefault(crit.value, {})[name] = asc.failed_fraction
        try:
            predictive = predict(model, train, test.X)
            scores[MSLL_COLUMN][name] = float(msll(predictive, test.y, train.y))
        except GpSelectError:
            scores[MSLL_COLUMN][name] = float("nan")
    ranks = {}
    for col in cfg.columns:
        col_ranks = _midranks([scores[col][n] for n in names], _HIGHER_BETTER[col])
        ranks[col] = {n: float(r) for n, r in zip(names, col_ranks)}
    return ReplicateResult(
        scores=scores,
        ranks=ranks,
        test_msll=dict(scores[MSLL_COLUMN]),
        theta=thetas,
        fit_failures=tuple(failures),
        asc_failed_fraction=asc_fracs,
    )


@dataclass(frozen=True)
class RankingReport:
    students: tuple[str, ...]
    columns: tuple[str, ...]
    mean_rank: dict
    ci_halfwidth: dict
    replicates: tuple[ReplicateResult, ...]
    failed_replicates: int = 0

    def to_dict(self, config_echo: dict | None = None) -> dict:
        out = {
            "students": list(self.students),
            "columns": list(self.columns),
            "aggregate": {
                col: {
                    name: {
                        "mean_rank": self.mean_rank[col][name],
                        "ci_halfwidth": self.ci_halfwidth[col][name],
                    }
                    for name in self.students
                }
                for col in self.columns
            },
            "replicates": [rep.to_dict() for rep in self.replicates],
            "failed_replicates": self.failed_replicates,
            "versions": package_versions(),
        }
        if config_echo is not None:
            out["config"] = config_echo
        return out


def aggregate_ranks(replicates: list[ReplicateResult]) -> RankingReport:
    """Mean rank and 95% half-width (1.96 * sd / sqrt(R)) per column and student."""
    if not replicates:
        raise ValueError("need at least one replicate")
    columns = tuple(replicates[0].ranks.keys())
    students = tuple(replicates[0].ranks[columns[0]].keys())
    mean_rank: dict = {}
    ci: dict = {}
    r = len(replicates)
    for col in columns:
        mean_rank[col] = {}
        ci[col] = {}
        for name in students:
            vals = np.array([rep.ranks[col][name] for rep in replicates])
            mean_rank[col][name] = float(np.mean(vals))
            ci[col][name] = float(1.96 * np.std(vals, ddof=1) / np.sqrt(r)) if r > 1 else 0.0
    return RankingReport(
        students=students,
        columns=columns,
        mean_rank=mean_rank,
        ci_halfwidth=ci,
        replicates=tuple(replicates),
    )


def _replicate_datasets(cfg: ExperimentConfig, r: int) -> tuple[Dataset, Dataset]:
    data_seed = derived_seed(cfg.seed, r, 0)
    if cfg.teacher is not None:
        return sample_synthetic(cfg.teacher, cfg.n_train, cfg.n_test, cfg.input_range, data_seed)
    data = cfg.data
    if data.n < cfg.n_train + 1:
        raise ValueError(f"dataset has {data.n} rows, need more than n_train={cfg.n_train}")
    rng = np.random.default_rng(data_seed)
    perm = rng.permutation(data.n)
    n_test = min(cfg.n_test, data.n - cfg.n_train)
    train_idx = perm[: cfg.n_train]
    test_idx = perm[cfg.n_train : cfg.n_train + n_test]
    train = Dataset(data.X[:, train_idx], data.y[train_idx])
    test = Dataset(data.X[:, test_idx], data.y[test_idx])
    return train, test


def run_ranking(cfg: ExperimentConfig) -> RankingReport:
    """Full replicated ranking experiment; deterministic for a given seed.

    A replicate that fails wholesale (e.g. its teacher draw is numerically
    singular) is dropped and counted; the run only fails if no replicate
    survives.
    """

    def one(r: int) -> ReplicateResult | None:
        try:
            train, test = _replicate_datasets(cfg, r)
            return rank_students(cfg, train, test, seed=derived_seed(cfg.seed, r))
        except GpSelectError:
            return None

    indices = range(cfg.replicates)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, indices))
    else:
        results = [one(r) for r in indices]
    survivors = [rep for rep in results if rep is not None]
    if not survivors:
        raise OptimizationFailed(f"all {cfg.replicates} replicates failed")
    report = aggregate_ranks(survivors)
    return RankingReport(
        students=report.students,
        columns=report.columns,
        mean_rank=report.mean_rank,
        ci_halfwidth=report.ci_halfwidth,
        replicates=report.replicates,
        failed_replicates=len(results) - len(survivors),
    )


def load_csv_dataset(path, input_columns, output_column, *, shift=None, scale=None) -> Dataset:
    """Read a header CSV into a Dataset with standardized inputs.

    Rows with missing or non-numeric requested fields are skipped and counted.
    Inputs are shifted/scaled to zero mean and unit variance per dimension
    (columns with zero spread pass through unscaled); outputs stay raw. The
    affine transform and skip count land in the dataset metadata. Passing
    ``shift``/``scale`` applies that transform instead of computing one, so a
    test set can reuse its training set's standardization.
    """
    input_columns = list(input_columns)
    rows_x: list[list[float]] = []
    rows_y: list[float] = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in [*input_columns, output_column] if c not in fields]
        if missing:
            raise SchemaError(f"columns {missing} not found in {path} (header: {fields})")
        for row in reader:
            try:
                xs = [float(row[c]) for c in input_columns]
                yv = float(row[output_column])
            except (TypeError, ValueError):
                skipped += 1
                continue
            if not (np.all(np.isfinite(xs)) and np.isfinite(yv)):
                skipped += 1
                continue
            rows_x.append(xs)
            rows_y.append(yv)
    if not rows_y:
        raise EmptyData(f"no usable rows in {path} ({skipped} skipped)")
    raw = np.asarray(rows_x, dtype=float).T  # (D, N)
    if shift is None or scale is None:
        shift = raw.mean(axis=1)
        scale = raw.std(axis=1)
        scale[scale == 0.0] = 1.0
    else:
        shift = np.asarray(shift, dtype=float).reshape(-1)
        scale = np.asarray(scale, dtype=float).reshape(-1)
        if shift.size != raw.shape[0] or scale.size != raw.shape[0]:
            raise SchemaError(
                f"standardization transform has {shift.size} dims, data has {raw.shape[0]}"
            )
    standardized = (raw - shift[:, None]) / scale[:, None]
    meta = {
        "input_shift": shift.tolist(),
        "input_scale": scale.tolist(),
        "skipped_rows": skipped,
        "source": str(path),
        "input_columns": input_columns,
        "output_column": output_column,
    }
    return Dataset(standardized, np.asarray(rows_y), meta)


def package_versions() -> dict:
    try:
        own = metadata.version("gpselect")
    except metadata.PackageNotFoundError:
        own = "unknown"
    import scipy

    return {"gpselect": own, "numpy": np.__version__, "scipy": scipy.__version__}


def write_report(report: dict, path) -> None:
    """Stable machine-parseable report: sorted keys, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rank_csv(report: RankingReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["criterion", "kernel", "mean_rank", "ci_halfwidth"])
        for col in report.columns:
            for name in report.students:
                writer.writerow(
                    [col, name, repr(report.mean_rank[col][name]), repr(report.ci_halfwidth[col][name])]
                )
