"""Experiment orchestration: LOSO evaluation, parameter tables, size curves, reports.

Every run is a list of independent fold jobs executed inline or in a process
pool; job seeds derive from the master seed and the job's grid position, and
outputs are written in fixed job order, so the emitted tree is byte-identical
for any worker count. A diverged fold is recorded as failed and the run
continues; the caller decides the exit status from the failure count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import classifiers
from .data import (Dataset, SplitPlan, SyntheticSpec, generate_synthetic, load_csv,
                   loso_splits, normalize, subsample_trials)
from .model import VARIANTS, HyperConfig, encode
from .nn import ConfigError, SgdConfig, TrainingDiverged, job_seed, make_rng
from .training import (LAMBDA_A_GRID, LAMBDA_N_GRID, SweepResult, TrainLog,
                       fit_feature_extractor, fit_task_classifier, probe_accuracies,
                       two_stage_sweep)


class ReportError(RuntimeError):
    """Missing or corrupt result files during report generation."""


# Parameter-impact row set: two unregularized baselines, a nuisance-weight
# column, then an adversary-weight column at the winning nuisance weight.
TABLE3_ROWS: tuple[tuple[str, float, float], ...] = (
    ("AE", 0.0, 0.0),
    ("cAE", 0.0, 0.0),
    ("D-cAE", 0.0, 0.005),
    ("D-cAE", 0.0, 0.01),
    ("D-cAE", 0.0, 0.2),
    ("D-cAE", 0.0, 0.5),
    ("DA-cAE", 0.01, 0.005),
    ("DA-cAE", 0.1, 0.005),
    ("DA-cAE", 0.2, 0.005),
    ("DA-cAE", 0.5, 0.005),
)


@dataclass
class ExperimentConfig:
    """Everything one experiment needs: data source, model grid, optimizer, I/O."""

    dataset: str | None = None          # interchange CSV; None generates synthetic data
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    variants: tuple[str, ...] = VARIANTS
    classifiers: tuple[str, ...] = classifiers.KINDS
    lambda_a: float = 0.1
    lambda_n: float = 0.01
    r_n: float | None = None            # None: per-variant default ratio
    latent_dim: int = 15
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 50
    val_fraction: float = 0.1
    fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    sweep_classifier: str = "mlp"
    sweep_lambda_n: tuple[float, ...] = LAMBDA_N_GRID
    sweep_lambda_a: tuple[float, ...] = LAMBDA_A_GRID
    seed: int = 0
    jobs: int = 1
    out: str = "out"

    def __post_init__(self) -> None:
        if isinstance(self.synthetic, dict):
            self.synthetic = SyntheticSpec(**self.synthetic)
        self.variants = tuple(self.variants)
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}, expected one of {VARIANTS}")
        self.classifiers = tuple(classifiers.canonical_kind(k) for k in self.classifiers)
        self.sweep_classifier = classifiers.canonical_kind(self.sweep_classifier)
        self.fractions = tuple(float(f) for f in self.fractions)
        if not self.fractions or any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise ConfigError(f"fractions must be in (0, 1], got {self.fractions}")
        self.sweep_lambda_n = tuple(float(v) for v in self.sweep_lambda_n)
        self.sweep_lambda_a = tuple(float(v) for v in self.sweep_lambda_a)
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        self.sgd(0)  # validates optimizer fields eagerly

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as err:
            raise ConfigError(f"config file {path} does not exist") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def sgd(self, seed: int) -> SgdConfig:
        return SgdConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                         epochs=self.epochs, seed=seed)

    def hyper(self, variant: str, seed: int, lambda_a: float | None = None,
              lambda_n: float | None = None) -> HyperConfig:
        return HyperConfig.for_variant(
            variant,
            lambda_a=self.lambda_a if lambda_a is None else lambda_a,
            lambda_n=self.lambda_n if lambda_n is None else lambda_n,
            r_n=self.r_n, latent_dim=self.latent_dim, sgd=self.sgd(seed))


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.dataset:
        path = Path(config.dataset)
        if not path.exists():
            raise ConfigError(f"dataset path {path} does not exist")
        return load_csv(path)
    return generate_synthetic(config.synthetic)[0]


@dataclass
class FoldResult:
    subject: int
    variant: str
    classifier: str
    status: str            # "done" or "failed"
    test_acc: float
    adversary_acc: float
    nuisance_acc: float
    lambda_a: float
    lambda_n: float
    r_n: float
    error: str = ""


FOLD_HEADER = tuple(f.name for f in fields(FoldResult))


@dataclass
class SummaryRow:
    variant: str
    classifier: str
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    folds: int             # completed folds behind the statistics
    failed: int


SUMMARY_HEADER = tuple(f.name for f in fields(SummaryRow))


@dataclass
class _FoldJob:
    subdir: str                  # output directory under the experiment root
    variant: str
    hyper: HyperConfig
    plan: SplitPlan
    kinds: tuple[str, ...]
    clf_seeds: tuple[int, ...]


def _run_fold(dataset: Dataset, job: _FoldJob) -> tuple[list[FoldResult], TrainLog | None]:
    normed = normalize(dataset, job.plan.train_ids)
    train = normed.subset(job.plan.train_ids)
    val = normed.subset(job.plan.val_ids)
    test = normed.subset(job.plan.test_ids)
    subject = job.plan.test_subject
    h = job.hyper
    try:
        params, log = fit_feature_extractor(train, h, val=val)
    except TrainingDiverged as err:
        nan = float("nan")
        return [FoldResult(subject, job.variant, kind, "failed", nan, nan, nan,
                           h.lambda_a, h.lambda_n, h.r_n, str(err))
                for kind in job.kinds], None
    adv, nui = probe_accuracies(params, val.x, val.s)
    results = []
    for kind, clf_seed in zip(job.kinds, job.clf_seeds):
        clf = fit_task_classifier(params, train, kind, seed=clf_seed)
        acc = classifiers.accuracy(clf, encode(params, test.x).full, test.y)
        results.append(FoldResult(subject, job.variant, kind, "done", acc, adv, nui,
                                  h.lambda_a, h.lambda_n, h.r_n))
    return results, log


def _run_fold_star(payload) -> tuple[list[FoldResult], TrainLog | None]:
    return _run_fold(*payload)


def _execute(dataset: Dataset, jobs: list[_FoldJob],
             n_workers: int) -> list[tuple[list[FoldResult], TrainLog | None]]:
    if n_workers <= 1:
        return [_run_fold(dataset, job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_fold_star, [(dataset, job) for job in jobs]))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fold_row(result: FoldResult) -> list:
    return [getattr(result, name) for name in FOLD_HEADER]


def _write_tree(root: Path, jobs: list[_FoldJob],
                outs: list[tuple[list[FoldResult], TrainLog | None]]) -> None:
    buckets: dict[tuple[str, str], list[list]] = {}
    for job, (results, log) in zip(jobs, outs):
        for result in results:
            buckets.setdefault((job.subdir, result.classifier), []).append(_fold_row(result))
        if log is not None:
            log_dir = root / job.subdir
            log_dir.mkdir(parents=True, exist_ok=True)
            log.to_csv(log_dir / f"trainlog_fold{job.plan.test_subject}.csv")
    for (subdir, kind), rows in buckets.items():
        _write_csv(root / subdir / kind / "folds.csv", FOLD_HEADER, rows)


def summarize(results: list[FoldResult]) -> list[SummaryRow]:
    """Five-number summary plus mean per (variant, classifier), in first-seen order.

    Quartiles use midpoint (linear) interpolation. Failed folds are excluded
    from the statistics and surfaced in the failed count.
    """
    order: list[tuple[str, str]] = []
    done: dict[tuple[str, str], list[float]] = {}
    failed: dict[tuple[str, str], int] = {}
    for r in results:
        key = (r.variant, r.classifier)
        if key not in done:
            order.append(key)
            done[key] = []
            failed[key] = 0
        if r.status == "done":
            done[key].append(r.test_acc)
        else:
            failed[key] += 1
    rows = []
    for key in order:
        accs = np.array(done[key])
        if accs.size:
            q1, med, q3 = np.percentile(accs, [25, 50, 75])
            stats = (float(accs.mean()), float(med), float(q1), float(q3),
                     float(accs.min()), float(accs.max()))
        else:
            stats = (float("nan"),) * 6
        rows.append(SummaryRow(key[0], key[1], *stats, accs.size, failed[key]))
    return rows


def _summary_rows(summary: list[SummaryRow]) -> list[list]:
    return [[getattr(s, name) for name in SUMMARY_HEADER] for s in summary]


def failed_count(results: list[FoldResult]) -> int:
    return sum(r.status != "done" for r in results)


def run_loso(config: ExperimentConfig, dataset: Dataset | None = None,
             experiment: str = "loso") -> tuple[list[FoldResult], list[SummaryRow]]:
    """Leave-one-subject-out evaluation of every (variant, classifier) pair.

    Writes <out>/<experiment>/<variant>/<classifier>/folds.csv, per-fold
    training logs beside the classifier directories, and a summary.csv.
    """
    if dataset is None:
        dataset = load_dataset(config)
    plans = loso_splits(dataset, config.val_fraction, seed=config.seed)
    jobs = []
    for vi, variant in enumerate(config.variants):
        for plan in plans:
            subj = plan.test_subject
            jobs.append(_FoldJob(
                variant, variant, config.hyper(variant, job_seed(config.seed, vi, subj)),
                plan, config.classifiers,
                tuple(job_seed(config.seed, vi, subj, ci)
                      for ci in range(len(config.classifiers)))))
    outs = _execute(dataset, jobs, config.jobs)
    results = [r for fold_results, _ in outs for r in fold_results]
    summary = summarize(results)
    root = Path(config.out) / experiment
    _write_tree(root, jobs, outs)
    _write_csv(root / "summary.csv", SUMMARY_HEADER, _summary_rows(summary))
    return results, summary


@dataclass
class Table3Row:
    variant: str
    lambda_a: float
    lambda_n: float
    r_n: float
    task_acc: float
    adversary_acc: float
    nuisance_acc: float
    chance: float
    folds: int
    failed: int


TABLE3_HEADER = tuple(f.name for f in fields(Table3Row))


def run_table3(config: ExperimentConfig, dataset: Dataset | None = None
               ) -> tuple[list[FoldResult], list[Table3Row]]:
    """Parameter-impact table: LOSO means of task/adversary/nuisance accuracy.

    Always evaluates the fixed TABLE3_ROWS grid with the MLP classifier; the
    chance column is the uniform subject-guessing baseline 1/S.
    """
    if dataset is None:
        dataset = load_dataset(config)
    plans = loso_splits(dataset, config.val_fraction, seed=config.seed)
    jobs = []
    for ri, (variant, lambda_a, lambda_n) in enumerate(TABLE3_ROWS):
        subdir = f"row{ri:02d}_{variant}"
        for plan in plans:
            subj = plan.test_subject
            jobs.append(_FoldJob(
                subdir, variant,
                config.hyper(variant, job_seed(config.seed, ri, subj),
                             lambda_a=lambda_a, lambda_n=lambda_n),
                plan, ("mlp",), (job_seed(config.seed, ri, subj, 0),)))
    outs = _execute(dataset, jobs, config.jobs)
    results = [r for fold_results, _ in outs for r in fold_results]
    chance = 1.0 / dataset.n_subjects
    n_folds = len(plans)
    table = []
    for ri, (variant, lambda_a, lambda_n) in enumerate(TABLE3_ROWS):
        fold_results = [r for rs, _ in outs[ri * n_folds: (ri + 1) * n_folds] for r in rs]
        done = [r for r in fold_results if r.status == "done"]
        n_failed = len(fold_results) - len(done)
        if done:
            task = float(np.mean([r.test_acc for r in done]))
            adv = float(np.mean([r.adversary_acc for r in done]))
            nui = float(np.mean([r.nuisance_acc for r in done]))
            r_n = done[0].r_n
        else:
            task = adv = nui = float("nan")
            r_n = jobs[ri * n_folds].hyper.r_n
        table.append(Table3Row(variant, lambda_a, lambda_n, r_n, task, adv, nui,
                               chance, len(done), n_failed))
    root = Path(config.out) / "table3"
    _write_tree(root, jobs, outs)
    _write_csv(root / "table3.csv", TABLE3_HEADER,
               [[getattr(t, name) for name in TABLE3_HEADER] for t in table])
    return results, table


@dataclass
class CurveRow:
    fraction: float
    variant: str
    classifier: str
    mean_acc: float
    folds: int
    failed: int


CURVE_HEADER = tuple(f.name for f in fields(CurveRow))


def run_datasize(config: ExperimentConfig, dataset: Dataset | None = None
                 ) -> tuple[list[CurveRow], dict[float, list[FoldResult]]]:
    """Accuracy versus training-set fraction, holding splits and seeds fixed.

    Trials are dropped from each fold's training split only; validation and
    test splits stay intact. Fraction 1.0 reuses the exact run_loso seeds and
    splits, so its numbers reproduce the full run. The subsample draw is
    shared across variants at a given (fraction, fold) for paired comparison.
    """
    if dataset is None:
        dataset = load_dataset(config)
    plans = loso_splits(dataset, config.val_fraction, seed=config.seed)
    all_jobs: list[_FoldJob] = []
    spans: list[tuple[float, int, int]] = []
    for fi, fraction in enumerate(config.fractions):
        sub_plans = []
        for plan in plans:
            train_ids = subsample_trials(dataset, plan.train_ids, fraction,
                                         seed=job_seed(config.seed, 7, fi, plan.test_subject))
            sub_plans.append(SplitPlan(plan.test_subject, train_ids,
                                       plan.val_ids, plan.test_ids))
        start = len(all_jobs)
        for vi, variant in enumerate(config.variants):
            for plan in sub_plans:
                subj = plan.test_subject
                all_jobs.append(_FoldJob(
                    f"frac{fraction}/{variant}", variant,
                    config.hyper(variant, job_seed(config.seed, vi, subj)),
                    plan, config.classifiers,
                    tuple(job_seed(config.seed, vi, subj, ci)
                          for ci in range(len(config.classifiers)))))
        spans.append((fraction, start, len(all_jobs)))
    outs = _execute(dataset, all_jobs, config.jobs)
    root = Path(config.out) / "datasize"
    _write_tree(root, all_jobs, outs)
    curve: list[CurveRow] = []
    by_fraction: dict[float, list[FoldResult]] = {}
    for fraction, start, end in spans:
        results = [r for fold_results, _ in outs[start:end] for r in fold_results]
        by_fraction[fraction] = results
        for s in summarize(results):
            curve.append(CurveRow(fraction, s.variant, s.classifier, s.mean,
                                  s.folds, s.failed))
    _write_csv(root / "curve.csv", CURVE_HEADER,
               [[getattr(c, name) for name in CURVE_HEADER] for c in curve])
    return curve, by_fraction


def holdout_split(dataset: Dataset, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded trial-granularity train/validation split over all subjects."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"validation fraction must be in (0, 1), got {val_fraction}")
    trials = np.array([t for t, _, _ in dataset.trial_table()])
    if trials.size < 2:
        raise ConfigError("need at least 2 trials to split")
    rng = make_rng(seed, 600)
    perm = rng.permutation(trials.size)
    n_val = min(max(int(np.floor(trials.size * val_fraction + 0.5)), 1), trials.size - 1)
    val_trials = set(trials[perm[:n_val]].tolist())
    val_mask = np.array([tr in val_trials for tr in dataset.trial])
    return np.flatnonzero(~val_mask), np.flatnonzero(val_mask)


def run_sweep(config: ExperimentConfig, dataset: Dataset | None = None) -> SweepResult:
    """Two-stage hyperparameter sweep on a 90/10 split; writes sweep.csv."""
    if dataset is None:
        dataset = load_dataset(config)
    train_ids, val_ids = holdout_split(dataset, config.val_fraction, config.seed)
    normed = normalize(dataset, train_ids)
    result = two_stage_sweep(normed.subset(train_ids), normed.subset(val_ids),
                             classifier=config.sweep_classifier,
                             lambda_n_grid=config.sweep_lambda_n,
                             lambda_a_grid=config.sweep_lambda_a,
                             r_n=config.r_n, sgd=config.sgd(config.seed), seed=config.seed)
    root = Path(config.out) / "sweep"
    root.mkdir(parents=True, exist_ok=True)
    result.to_csv(root / "sweep.csv")
    return result


def _parse_folds_csv(path: Path) -> list[FoldResult]:
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(FOLD_HEADER) - set(reader.fieldnames or [])
            if missing:
                raise ReportError(f"corrupt results file {path}: missing columns {sorted(missing)}")
            out = []
            for row in reader:
                out.append(FoldResult(
                    int(row["subject"]), row["variant"], row["classifier"], row["status"],
                    float(row["test_acc"]), float(row["adversary_acc"]),
                    float(row["nuisance_acc"]), float(row["lambda_a"]),
                    float(row["lambda_n"]), float(row["r_n"]), row["error"]))
            return out
    except (ValueError, KeyError, OSError) as err:
        raise ReportError(f"corrupt results file {path}: {err}") from err


def report(results_dir: str | Path, out_dir: str | Path | None = None
           ) -> tuple[list[SummaryRow], list[list]]:
    """Aggregate fold CSVs into box-plot statistics and an accuracy matrix.

    Emits report_summary.csv (per variant and classifier: mean, median,
    quartiles, extremes) and report_matrix.csv (classifier rows by variant
    columns of mean accuracy). Raises ReportError naming any unreadable file.
    """
    root = Path(results_dir)
    if not root.is_dir():
        raise ReportError(f"missing results directory {root}")
    paths = sorted(root.rglob("folds.csv"))
    if not paths:
        raise ReportError(f"no folds.csv files under {root}")
    results: list[FoldResult] = []
    for path in paths:
        results.extend(_parse_folds_csv(path))
    summary = summarize(results)

    variant_order = [v for v in VARIANTS if any(s.variant == v for s in summary)]
    variant_order += sorted({s.variant for s in summary} - set(variant_order))
    kind_order = [k for k in classifiers.KINDS if any(s.classifier == k for s in summary)]
    kind_order += sorted({s.classifier for s in summary} - set(kind_order))
    means = {(s.variant, s.classifier): s.mean for s in summary}
    matrix = [["classifier", *variant_order]]
    for kind in kind_order:
        matrix.append([kind] + [means.get((v, kind), "") for v in variant_order])

    out_root = Path(out_dir) if out_dir is not None else root
    _write_csv(out_root / "report_summary.csv", SUMMARY_HEADER, _summary_rows(summary))
    _write_csv(out_root / "report_matrix.csv", matrix[0], matrix[1:])
    return summary, matrix
