"""Synthetic datasets and data partitioning across agents.

Generators are pure functions of their arguments: the same seed gives
bit-identical arrays, and the "train"/"test" splits of one seed are
independent draws from the same distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasiblePartitionError, SaddleError
from .rngs import TAG_DATA, TAG_PARTITION, stream

__all__ = [
    "Dataset",
    "PartitionPlan",
    "make_blobs",
    "make_spirals",
    "partition_dirichlet",
    "iid_partition",
    "load_dataset_file",
    "save_dataset_file",
]

_SPLIT_CODES = {"train": 0, "test": 1}


@dataclass(frozen=True)
class Dataset:
    """Feature/label table with a declared class count and split."""

    features: np.ndarray  # (N, d_in) float64
    labels: np.ndarray    # (N,) int64 in [0, n_classes)
    n_classes: int
    split: str

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise SaddleError(
                f"features {x.shape} and labels {y.shape} are inconsistent"
            )
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise SaddleError(f"labels must lie in [0, {self.n_classes})")
        if self.split not in _SPLIT_CODES:
            raise SaddleError(f"split must be 'train' or 'test', got {self.split!r}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]


def _blob_means(n_classes: int, d_in: int) -> np.ndarray:
    """Deterministic well-separated class means.

    Orthogonal unit basis when the classes fit into the ambient dimension,
    a unit ring in the first two coordinates otherwise (d_in == 1 falls back
    to evenly spaced points on [-1, 1]).
    """
    means = np.zeros((n_classes, d_in))
    if n_classes <= d_in:
        means[np.arange(n_classes), np.arange(n_classes)] = 1.0
    elif d_in == 1:
        if n_classes == 1:
            means[0, 0] = 0.0
        else:
            means[:, 0] = np.linspace(-1.0, 1.0, n_classes)
    else:
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        means[:, 0] = np.cos(angles)
        means[:, 1] = np.sin(angles)
    return means


def make_blobs(
    n_classes: int,
    per_class: int,
    d_in: int,
    spread: float,
    seed: int,
    split: str = "train",
) -> Dataset:
    """Isotropic Gaussian clusters, one per class, with exact class balance."""
    if n_classes < 1 or per_class < 1 or d_in < 1:
        raise SaddleError("n_classes, per_class and d_in must all be >= 1")
    if spread < 0:
        raise SaddleError("spread must be non-negative")
    if split not in _SPLIT_CODES:
        raise SaddleError(f"split must be 'train' or 'test', got {split!r}")
    rng = stream(TAG_DATA, seed, _SPLIT_CODES[split], 0)
    means = _blob_means(n_classes, d_in)
    features = np.repeat(means, per_class, axis=0)
    features = features + spread * rng.normal(size=features.shape)
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    return Dataset(features=features, labels=labels, n_classes=n_classes, split=split)


def make_spirals(
    per_class: int,
    noise: float,
    seed: int,
    split: str = "train",
) -> Dataset:
    """Two interleaved planar spirals; a non-convex binary task."""
    if per_class < 1:
        raise SaddleError("per_class must be >= 1")
    if noise < 0:
        raise SaddleError("noise must be non-negative")
    if split not in _SPLIT_CODES:
        raise SaddleError(f"split must be 'train' or 'test', got {split!r}")
    rng = stream(TAG_DATA, seed, _SPLIT_CODES[split], 1)
    t = np.linspace(0.25, 1.0, per_class) * 3.0 * np.pi
    radius = t / (3.0 * np.pi)
    arm = np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)
    features = np.concatenate([arm, -arm], axis=0)
    features = features + noise * rng.normal(size=features.shape)
    labels = np.repeat(np.arange(2, dtype=np.int64), per_class)
    return Dataset(features=features, labels=labels, n_classes=2, split=split)


@dataclass(frozen=True)
class PartitionPlan:
    """Assignment of every sample index to exactly one agent."""

    n_agents: int
    method: str                 # "dirichlet" or "iid"
    alpha: float | None         # concentration; None for iid
    seed: int
    assignment: np.ndarray      # (N,) int64 agent index per sample

    def shard_indices(self, agent: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == agent)

    def shard_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_agents)


def _largest_remainder_counts(p: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to `total`, proportional to p, ties to lower index."""
    raw = p * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _log_gamma_draws(rng: np.random.Generator, alpha: float, n: int) -> np.ndarray:
    """log of n iid Gamma(alpha) draws, stable for tiny alpha.

    Gamma(alpha) underflows to exact 0.0 about half the time at alpha ~ 1e-3,
    which would collapse masked renormalization to a uniform fallback. For
    small alpha we sample via Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha)
    and keep the log, so relative magnitudes survive arbitrarily far below
    the float range.
    """
    with np.errstate(divide="ignore"):
        if alpha < 0.1:
            g = rng.standard_gamma(alpha + 1.0, size=n)
            u = rng.random(size=n)
            return np.log(g) + np.log(u) / alpha
        return np.log(rng.standard_gamma(alpha, size=n))


def _repair_min_one(assignment: np.ndarray, n_agents: int) -> None:
    # move single samples out of the largest shard until nobody is empty
    sizes = np.bincount(assignment, minlength=n_agents)
    for agent in range(n_agents):
        if sizes[agent] == 0:
            donor = int(np.argmax(sizes))
            take = np.flatnonzero(assignment == donor)[-1]
            assignment[take] = agent
            sizes[donor] -= 1
            sizes[agent] += 1


def partition_dirichlet(
    ds: Dataset, n_agents: int, alpha: float, seed: int
) -> PartitionPlan:
    """Label-skewed split: per class, agent proportions ~ Dirichlet(alpha).

    Agents that already hold their even share are masked out before a class
    is assigned, which keeps shards near-balanced in size and makes small
    alpha concentrate each class on a single distinct agent. Proportions are
    rounded to integer counts by largest remainder, and a repair pass moves
    single samples from the largest shard so every agent ends up non-empty.
    """
    n_samples = len(ds)
    if n_agents < 1:
        raise InfeasiblePartitionError(f"need at least 1 agent, got {n_agents}")
    if n_agents > n_samples:
        raise InfeasiblePartitionError(
            f"cannot give {n_agents} agents at least one of {n_samples} samples"
        )
    if not alpha > 0:
        raise InfeasiblePartitionError(f"alpha must be > 0, got {alpha}")
    rng = stream(TAG_PARTITION, seed)
    capacity = n_samples / n_agents
    assignment = np.full(n_samples, -1, dtype=np.int64)
    sizes = np.zeros(n_agents, dtype=np.int64)
    for cls in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == cls)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        logx = _log_gamma_draws(rng, alpha, n_agents)
        logx = np.where(sizes < capacity, logx, -np.inf)
        if np.all(np.isneginf(logx)):
            open_slots = (sizes < capacity).astype(float)
            p = open_slots if open_slots.sum() > 0 else np.ones(n_agents)
        else:
            p = np.exp(logx - logx.max())
        p = p / p.sum()
        counts = _largest_remainder_counts(p, idx.size)
        bounds = np.cumsum(counts)[:-1]
        for agent, part in enumerate(np.split(idx, bounds)):
            assignment[part] = agent
        sizes += counts
    _repair_min_one(assignment, n_agents)
    return PartitionPlan(
        n_agents=n_agents,
        method="dirichlet",
        alpha=float(alpha),
        seed=seed,
        assignment=assignment,
    )


def iid_partition(ds: Dataset, n_agents: int, seed: int) -> PartitionPlan:
    """Uniform random split into near-equal shards (sizes differ by <= 1)."""
    n_samples = len(ds)
    if n_agents < 1:
        raise InfeasiblePartitionError(f"need at least 1 agent, got {n_agents}")
    if n_agents > n_samples:
        raise InfeasiblePartitionError(
            f"cannot give {n_agents} agents at least one of {n_samples} samples"
        )
    rng = stream(TAG_PARTITION, seed)
    perm = rng.permutation(n_samples)
    base, extra = divmod(n_samples, n_agents)
    assignment = np.empty(n_samples, dtype=np.int64)
    start = 0
    for agent in range(n_agents):
        size = base + (1 if agent < extra else 0)
        assignment[perm[start : start + size]] = agent
        start += size
    return PartitionPlan(
        n_agents=n_agents, method="iid", alpha=None, seed=seed, assignment=assignment
    )


def save_dataset_file(ds: Dataset, path: str | Path) -> None:
    """Write `d_in,C,count` header then `label,f1,...,f_din` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([ds.d_in, ds.n_classes, len(ds)])
        for feats, label in zip(ds.features, ds.labels):
            writer.writerow([int(label)] + [repr(float(v)) for v in feats])


def load_dataset_file(path: str | Path, split: str = "train") -> Dataset:
    """Read the CSV layout written by save_dataset_file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SaddleError(f"{path}: empty dataset file") from None
        if len(header) != 3:
            raise SaddleError(f"{path}: header must be d_in,C,count")
        d_in, n_classes, count = (int(v) for v in header)
        features, labels = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != d_in + 1:
                raise SaddleError(
                    f"{path}: row {len(labels) + 2} has {len(row) - 1} features,"
                    f" expected {d_in}"
                )
            labels.append(int(row[0]))
            features.append([float(v) for v in row[1:]])
    if len(labels) != count:
        raise SaddleError(f"{path}: header count {count} != {len(labels)} rows")
    return Dataset(
        features=np.asarray(features, dtype=float).reshape(count, d_in),
        labels=np.asarray(labels, dtype=np.int64),
        n_classes=n_classes,
        split=split,
    )
