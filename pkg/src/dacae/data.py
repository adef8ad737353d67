"""Dataset ingestion, preprocessing, splits and synthetic data generation.

Datasets are columnar: one float64 matrix of channel values plus integer
columns for task label, subject and trial, one row per 1 Hz instance. Raw
multi-rate recordings are aligned to a common 1 Hz grid on ingestion
(window means when downsampling, sample-and-hold when upsampling), surplus
relaxation trials are dropped so every subject keeps one trial per class,
and z-scoring always uses training-fold statistics only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .nn import ConfigError, make_rng

RELAX_LABEL = 0
LABEL_NAMES = {0: "relax", 1: "physical", 2: "cognitive", 3: "emotional"}
CSV_HEADER = ["subject", "trial", "label", "t"]


class IngestionError(ValueError):
    """Raw recordings that cannot be turned into a dataset."""


@dataclass
class Sample:
    """One 1 Hz observation: channel vector x, task label y, subject s, trial id."""
    x: np.ndarray
    y: int
    s: int
    trial: int
    t: float


@dataclass
class Dataset:
    """Immutable-by-convention sample collection with its cardinalities."""

    x: np.ndarray          # (n, C) float64
    y: np.ndarray          # (n,) intp, task labels in [0, L)
    s: np.ndarray          # (n,) intp, subject ids in [0, S)
    trial: np.ndarray      # (n,) intp, globally unique trial ids
    t: np.ndarray          # (n,) float64, seconds on the 1 Hz grid
    n_classes: int
    n_subjects: int
    normalization: tuple[np.ndarray, np.ndarray] | None = None  # per-channel (mean, std)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("x must be (n, channels)")
        n = self.x.shape[0]
        for name in ("y", "s", "trial"):
            arr = np.asarray(getattr(self, name), dtype=np.intp)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            setattr(self, name, arr)
        self.t = np.asarray(self.t, dtype=np.float64)
        if not np.all(np.isfinite(self.x)):
            raise ValueError("non-finite channel values")
        if n and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("task label out of range")
        if n and (self.s.min() < 0 or self.s.max() >= self.n_subjects):
            raise ValueError("subject id out of range")
        seen: dict[int, tuple[int, int]] = {}
        for tr, s, y in zip(self.trial, self.s, self.y):
            key = (int(s), int(y))
            if seen.setdefault(int(tr), key) != key:
                raise ValueError(f"trial id {tr} is shared across (subject, label) pairs")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_channels(self) -> int:
        return self.x.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.x[i], int(self.y[i]), int(self.s[i]),
                      int(self.trial[i]), float(self.t[i]))

    def subset(self, ids: np.ndarray) -> "Dataset":
        ids = np.asarray(ids, dtype=np.intp)
        return Dataset(self.x[ids], self.y[ids], self.s[ids], self.trial[ids],
                       self.t[ids], self.n_classes, self.n_subjects, self.normalization)

    def trial_table(self) -> list[tuple[int, int, int]]:
        """Sorted unique (trial, subject, label) triples."""
        out = {}
        for tr, s, y in zip(self.trial, self.s, self.y):
            out[int(tr)] = (int(tr), int(s), int(y))
        return [out[k] for k in sorted(out)]


# -- raw ingestion -------------------------------------------------------------

@dataclass
class RawTrial:
    """One recorded trial: per-channel (timestamps, values) at arbitrary rates."""
    subject: int
    trial: int
    label: int | None
    channels: dict[str, tuple[np.ndarray, np.ndarray]]


def resample_channel(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Align one channel to the 1 Hz grid.

    Grid second k takes the mean of samples with timestamp in [k, k+1) when
    any exist (downsampling); otherwise it holds the nearest earlier sample,
    falling back to the first sample before the recording starts.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.size == 0:
        raise IngestionError("channel has no samples")
    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    out = np.empty(grid.size)
    for i, k in enumerate(grid):
        lo = np.searchsorted(times, k, side="left")
        hi = np.searchsorted(times, k + 1.0, side="left")
        if hi > lo:
            out[i] = values[lo:hi].mean()
        elif lo > 0:
            out[i] = values[lo - 1]
        else:
            out[i] = values[0]
    return out


def ingest(trials: list[RawTrial], channel_map: list[str], n_classes: int = 4,
           n_subjects: int | None = None) -> Dataset:
    """Build a dataset from raw recordings.

    channel_map fixes the channel order of the output matrix. Trials must all
    carry a label; a subject's relaxation trials beyond the first are dropped
    so each subject contributes exactly one trial per class. Raw trial numbers
    may repeat across subjects, so kept trials get fresh globally unique ids.
    """
    if not trials:
        raise IngestionError("no trials to ingest")
    kept: list[RawTrial] = []
    seen_relax: set[int] = set()
    for tr in sorted(trials, key=lambda tr: (tr.subject, tr.trial)):
        if tr.label is None:
            raise IngestionError(f"unlabeled trial {tr.trial} of subject {tr.subject}")
        if tr.label == RELAX_LABEL:
            if tr.subject in seen_relax:
                continue
            seen_relax.add(tr.subject)
        kept.append(tr)

    xs, ys, ss, trs, ts = [], [], [], [], []
    for uid, tr in enumerate(kept):
        for name in channel_map:
            if name not in tr.channels:
                raise IngestionError(
                    f"missing channel {name!r} in trial {tr.trial} of subject {tr.subject}")
        start = min(float(np.min(tr.channels[name][0])) for name in channel_map)
        end = max(float(np.max(tr.channels[name][0])) for name in channel_map)
        n_seconds = max(1, int(math.floor(end - start)) + 1)
        grid = start + np.arange(n_seconds, dtype=np.float64)
        cols = [resample_channel(*tr.channels[name], grid) for name in channel_map]
        xs.append(np.column_stack(cols))
        ys.append(np.full(n_seconds, tr.label, dtype=np.intp))
        ss.append(np.full(n_seconds, tr.subject, dtype=np.intp))
        trs.append(np.full(n_seconds, uid, dtype=np.intp))
        ts.append(grid - start)

    subjects = sorted({tr.subject for tr in kept})
    if n_subjects is None:
        n_subjects = max(subjects) + 1
    return Dataset(np.concatenate(xs), np.concatenate(ys), np.concatenate(ss),
                   np.concatenate(trs), np.concatenate(ts), n_classes, n_subjects)


# -- normalization -------------------------------------------------------------

def normalize(dataset: Dataset, train_ids: np.ndarray) -> Dataset:
    """Z-score every sample with per-channel statistics of the training rows only.

    Channels that are constant on the training rows are centered but not
    scaled (std is kept at 1) to avoid dividing by zero.
    """
    train_ids = np.asarray(train_ids, dtype=np.intp)
    if train_ids.size == 0:
        raise ConfigError("empty training set for normalization")
    mean = dataset.x[train_ids].mean(axis=0)
    std = dataset.x[train_ids].std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return Dataset((dataset.x - mean) / std, dataset.y, dataset.s, dataset.trial,
                   dataset.t, dataset.n_classes, dataset.n_subjects, (mean, std))


# -- splits --------------------------------------------------------------------

@dataclass
class SplitPlan:
    test_subject: int
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray


def loso_splits(dataset: Dataset, val_fraction: float = 0.1, seed: int = 0) -> list[SplitPlan]:
    """One leave-one-subject-out plan per subject present in the dataset.

    The held-out subject's samples form the test set; trials of the remaining
    subjects are shuffled with a fold-derived seed and split train/validation
    at trial granularity, so no trial straddles the boundary.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"validation fraction must be in (0, 1), got {val_fraction}")
    subjects = np.unique(dataset.s)
    if subjects.size < 2:
        raise ConfigError("need at least 2 subjects for leave-one-subject-out")
    plans = []
    for fold, subj in enumerate(subjects):
        test_mask = dataset.s == subj
        rest_trials = np.unique(dataset.trial[~test_mask])
        rng = make_rng(seed, 100, fold)
        perm = rng.permutation(rest_trials.size)
        n_val = int(math.floor(rest_trials.size * val_fraction + 0.5))
        n_val = min(max(n_val, 1), rest_trials.size - 1)
        val_trials = set(rest_trials[perm[:n_val]].tolist())
        val_mask = np.array([tr in val_trials for tr in dataset.trial]) & ~test_mask
        train_mask = ~test_mask & ~val_mask
        plans.append(SplitPlan(int(subj), np.flatnonzero(train_mask),
                               np.flatnonzero(val_mask), np.flatnonzero(test_mask)))
    return plans


def subsample_trials(dataset: Dataset, ids: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Keep a seeded fraction of the trials behind the given sample ids.

    Selection is by trial; the surviving ids keep their original order so a
    fraction of 1.0 returns ids unchanged. Raises if any (subject, class)
    cell present in ids would vanish.
    """
    ids = np.asarray(ids, dtype=np.intp)
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"training fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return ids
    trials = np.unique(dataset.trial[ids])
    rng = make_rng(seed, 200)
    n_keep = max(1, int(math.floor(trials.size * fraction + 0.5)))
    keep = set(trials[rng.permutation(trials.size)[:n_keep]].tolist())
    out = ids[np.array([tr in keep for tr in dataset.trial[ids]])]
    before = {(int(a), int(b)) for a, b in zip(dataset.s[ids], dataset.y[ids])}
    after = {(int(a), int(b)) for a, b in zip(dataset.s[out], dataset.y[out])}
    missing = sorted(before - after)
    if missing:
        raise ConfigError(f"training fraction {fraction} drops (subject, class) cells {missing}")
    return out


# -- synthetic data ------------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Factorized generator: x = alpha * T[y] + beta * U[s] + noise.

    T holds one unit-norm template row per task class, U one unit-norm offset
    row per subject; both are drawn once from the seed. Every (subject, class)
    cell contributes samples_per_cell consecutive 1 Hz samples, split across
    trials_per_cell trials so trial-granular subsampling has room to move.
    """

    n_subjects: int = 6
    n_classes: int = 4
    n_channels: int = 7
    samples_per_cell: int = 200
    trials_per_cell: int = 1
    alpha: float = 1.0
    beta: float = 1.0
    sigma: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("signal strengths must be >= 0")
        if self.sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        if min(self.n_subjects, self.n_classes, self.n_channels, self.samples_per_cell) < 1:
            raise ConfigError("all cardinalities must be >= 1")
        if not 1 <= self.trials_per_cell <= self.samples_per_cell:
            raise ConfigError("trials_per_cell must be in [1, samples_per_cell]")


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Dataset with known task/subject factors; returns (dataset, T, U)."""
    rng = make_rng(spec.seed, 300)
    T = _unit_rows(rng, spec.n_classes, spec.n_channels)
    U = _unit_rows(rng, spec.n_subjects, spec.n_channels)
    n = spec.n_subjects * spec.n_classes * spec.samples_per_cell
    x = np.empty((n, spec.n_channels))
    y = np.empty(n, dtype=np.intp)
    s = np.empty(n, dtype=np.intp)
    trial = np.empty(n, dtype=np.intp)
    t = np.empty(n)
    row = 0
    for subj in range(spec.n_subjects):
        for cls in range(spec.n_classes):
            k = spec.samples_per_cell
            noise = rng.standard_normal((k, spec.n_channels)) * spec.sigma
            x[row: row + k] = spec.alpha * T[cls] + spec.beta * U[subj] + noise
            y[row: row + k] = cls
            s[row: row + k] = subj
            cell = subj * spec.n_classes + cls
            # cell samples divide into trials_per_cell near-equal consecutive runs
            bounds = np.linspace(0, k, spec.trials_per_cell + 1).astype(np.intp)
            for j in range(spec.trials_per_cell):
                lo, hi = row + bounds[j], row + bounds[j + 1]
                trial[lo:hi] = cell * spec.trials_per_cell + j
                t[lo:hi] = np.arange(hi - lo, dtype=np.float64)
            row += k
    dataset = Dataset(x, y, s, trial, t, spec.n_classes, spec.n_subjects)
    return dataset, T, U


# -- interchange CSV -----------------------------------------------------------

def save_csv(path: str | Path, dataset: Dataset) -> None:
    """Write the interchange CSV: subject,trial,label,t,ch0..chN; LF endings."""
    header = CSV_HEADER + [f"ch{i}" for i in range(dataset.n_channels)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [int(dataset.s[i]), int(dataset.trial[i]), int(dataset.y[i]),
                   repr(float(dataset.t[i]))]
            row += [repr(float(v)) for v in dataset.x[i]]
            writer.writerow(row)


def load_csv(path: str | Path, n_classes: int | None = None,
             n_subjects: int | None = None) -> Dataset:
    """Read the interchange CSV back into a dataset."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[: len(CSV_HEADER)] != CSV_HEADER:
            raise IngestionError(f"bad interchange header in {path}")
        n_channels = len(header) - len(CSV_HEADER)
        if n_channels < 1:
            raise IngestionError(f"no channel columns in {path}")
        rows = list(reader)
    n = len(rows)
    x = np.empty((n, n_channels))
    y = np.empty(n, dtype=np.intp)
    s = np.empty(n, dtype=np.intp)
    trial = np.empty(n, dtype=np.intp)
    t = np.empty(n)
    for i, row in enumerate(rows):
        s[i], trial[i], y[i] = int(row[0]), int(row[1]), int(row[2])
        t[i] = float(row[3])
        x[i] = [float(v) for v in row[4: 4 + n_channels]]
    if n_classes is None:
        n_classes = int(y.max()) + 1 if n else 1
    if n_subjects is None:
        n_subjects = int(s.max()) + 1 if n else 1
    return Dataset(x, y, s, trial, t, n_classes, n_subjects)


def save_synthetic(csv_path: str | Path, dataset: Dataset, spec: SyntheticSpec,
                   T: np.ndarray, U: np.ndarray) -> None:
    """Synthetic CSV plus a JSON sidecar holding the generator spec and factors."""
    save_csv(csv_path, dataset)
    sidecar = Path(str(csv_path) + ".factors.json")
    payload = {
        "spec": asdict(spec),
        "task_templates": T.tolist(),
        "subject_offsets": U.tolist(),
    }
    sidecar.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_synthetic_sidecar(csv_path: str | Path) -> tuple[SyntheticSpec, np.ndarray, np.ndarray]:
    payload = json.loads(Path(str(csv_path) + ".factors.json").read_text(encoding="utf-8"))
    spec = SyntheticSpec(**payload["spec"])
    return spec, np.asarray(payload["task_templates"]), np.asarray(payload["subject_offsets"])
