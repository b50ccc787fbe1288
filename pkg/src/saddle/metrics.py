"""Measured quantities behind every logged curve and table.

Everything here is pure measurement: consensus dispersion, compression error
norms, Hessian sharpness via power iteration, gradient-variance diagnostics,
communication-cost accounting, and the CSV formats that persist them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .compression import CompressionOp, bit_cost, identity_op
from .errors import SaddleError
from .models import Batch, GradOracle
from .params import Block, block_slices, single_block

__all__ = [
    "ROUND_COLUMNS",
    "RoundRow",
    "MetricsLog",
    "VarianceDiagnostics",
    "consensus_error",
    "block_norm_sum",
    "compression_error_norms",
    "lambda_max",
    "loss_surface",
    "variance_diagnostics",
    "cost_ratio",
    "CommCostReport",
    "comm_cost_report",
    "format_value",
    "write_rounds_csv",
    "read_rounds_csv",
    "write_diagnostics_csv",
    "write_surface_csv",
    "read_surface_csv",
]

ROUND_COLUMNS = (
    "round",
    "train_loss_mean",
    "test_acc_consensus",
    "consensus_error",
    "grad_norm_mean",
    "compression_error_sum",
    "update_norm_sum",
    "bits_transmitted_cumulative",
)

# Per-agent total bits are reported in decimal gigabytes.
_BITS_PER_GB = 8e9


@dataclass(frozen=True)
class RoundRow:
    """One logged round, in the fixed CSV column order."""

    round: int
    train_loss_mean: float
    test_acc_consensus: float
    consensus_error: float
    grad_norm_mean: float
    compression_error_sum: float
    update_norm_sum: float
    bits_transmitted_cumulative: int

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name in ROUND_COLUMNS)

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in self.values())


@dataclass
class MetricsLog:
    """Round rows plus end-of-run diagnostics for one training run."""

    rows: list[RoundRow] = field(default_factory=list)
    lambda_max_samples: list[tuple[int, float]] = field(default_factory=list)
    sigma2_hat: float | None = None
    delta2_hat: float | None = None
    diverged: bool = False

    @property
    def final_row(self) -> RoundRow:
        if not self.rows:
            raise SaddleError("metrics log has no rows")
        return self.rows[-1]

    @property
    def final_test_acc(self) -> float:
        return self.final_row.test_acc_consensus


@dataclass(frozen=True)
class VarianceDiagnostics:
    """Estimates of the two gradient-noise scales: sampling and heterogeneity."""

    sigma2_hat: float
    delta2_hat: float


def _param_arrays(agents) -> list[np.ndarray]:
    out = []
    for a in agents:
        vec = a.params if hasattr(a, "params") else a
        out.append(np.asarray(vec, dtype=float).ravel())
    return out


def consensus_error(agents) -> float:
    """(1/n) sum_i ||x_i - xbar||^2 over agent parameter vectors."""
    params = _param_arrays(agents)
    if not params:
        raise SaddleError("consensus_error needs at least one agent")
    stacked = np.stack(params)
    centered = stacked - stacked.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=1)))


def block_norm_sum(values: np.ndarray, blocks: tuple[Block, ...] | None = None) -> float:
    """Sum of per-block L2 norms (layer-wise aggregation, not one global norm)."""
    v = np.asarray(values, dtype=float).ravel()
    if blocks is None:
        blocks = single_block(v.shape[0])
    return float(sum(np.linalg.norm(v[sl]) for _, sl in block_slices(blocks)))


def compression_error_norms(payloads) -> tuple[float, float]:
    """Aggregate (error_sum, payload_norm_sum) over (target, decoded, blocks) triples.

    Targets are whatever the active algorithm compresses: model updates for the
    gossip-tracking family, gradients for the cross-gradient family. Empty
    input (an uncompressed run) returns zeros.
    """
    error_sum = 0.0
    payload_sum = 0.0
    for target, decoded, blocks in payloads:
        t = np.asarray(target, dtype=float).ravel()
        d = np.asarray(decoded, dtype=float).ravel()
        if t.shape != d.shape:
            raise SaddleError("payload and decoded shapes differ")
        error_sum += block_norm_sum(d - t, blocks)
        payload_sum += block_norm_sum(t, blocks)
    return error_sum, payload_sum


def lambda_max(
    oracle,
    params: np.ndarray,
    batch: Batch | None = None,
    iters: int = 200,
    tol: float = 1e-9,
    rng: np.random.Generator | None = None,
    restarts: int = 2,
    v0: np.ndarray | None = None,
) -> float:
    """Dominant Hessian eigenvalue magnitude by restarted power iteration.

    `oracle` is either a GradOracle (hvp evaluated at params on batch) or a
    bare callable v -> Hv. Multiple restarts guard against a start vector
    orthogonal to the top eigenspace.
    """
    if iters < 1 or restarts < 1:
        raise SaddleError("iters and restarts must be >= 1")
    p = np.asarray(params, dtype=float).ravel()
    if rng is None:
        rng = np.random.default_rng(0)
    if hasattr(oracle, "hvp"):
        hv = lambda v: oracle.hvp(p, batch, v)  # noqa: E731
    else:
        hv = oracle
    best = 0.0
    for r in range(restarts):
        if r == 0 and v0 is not None:
            v = np.asarray(v0, dtype=float).ravel().copy()
        else:
            v = rng.normal(size=p.size)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        v = v / norm
        rayleigh = 0.0
        for _ in range(iters):
            w = np.asarray(hv(v), dtype=float)
            if not np.all(np.isfinite(w)):
                raise SaddleError("non-finite Hessian-vector product")
            new_rayleigh = float(v @ w)
            w_norm = float(np.linalg.norm(w))
            if w_norm == 0.0:
                rayleigh = 0.0
                break
            v = w / w_norm
            if abs(new_rayleigh - rayleigh) <= tol * max(1.0, abs(new_rayleigh)):
                rayleigh = new_rayleigh
                break
            rayleigh = new_rayleigh
        best = max(best, abs(rayleigh))
    return best


def loss_surface(
    oracle: GradOracle,
    params: np.ndarray,
    batch: Batch | None = None,
    extent: float = 1.0,
    grid_points: int = 21,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Loss over a 2-D slice spanned by two orthonormal Gaussian directions.

    Returns (coords, grid) with grid[i, j] = loss(params + coords[i]*u +
    coords[j]*v). grid_points must be odd so coords contains an exact 0 and
    the center cell equals loss(params).
    """
    if grid_points < 1 or grid_points % 2 == 0:
        raise SaddleError(f"grid_points must be odd and positive, got {grid_points}")
    if extent <= 0:
        raise SaddleError(f"extent must be positive, got {extent}")
    p = np.asarray(params, dtype=float).ravel()
    if rng is None:
        rng = np.random.default_rng(0)
    u = rng.normal(size=p.size)
    u = u / np.linalg.norm(u)
    v = rng.normal(size=p.size)
    v = v - (v @ u) * u
    v = v / np.linalg.norm(v)
    coords = np.linspace(-extent, extent, grid_points)
    coords[grid_points // 2] = 0.0
    grid = np.empty((grid_points, grid_points))
    for i, a in enumerate(coords):
        for j, b in enumerate(coords):
            grid[i, j] = oracle.loss(p + a * u + b * v, batch)
    return coords, grid


def variance_diagnostics(
    oracles,
    params: np.ndarray,
    shard_batches,
    sample_batches=None,
) -> VarianceDiagnostics:
    """Estimate gradient noise (sigma2) and heterogeneity (delta2) at one point.

    shard_batches holds each agent's full shard (None for batch-free oracles);
    sample_batches optionally holds per-agent minibatch lists. With no sampled
    minibatches (full-batch training) sigma2_hat is exactly 0.
    """
    oracles = list(oracles)
    if not oracles:
        raise SaddleError("variance_diagnostics needs at least one agent")
    p = np.asarray(params, dtype=float).ravel()
    shard_batches = list(shard_batches)
    if len(shard_batches) != len(oracles):
        raise SaddleError("one shard batch per agent required")
    full = [o.grad(p, b) for o, b in zip(oracles, shard_batches)]
    mean_grad = np.mean(full, axis=0)
    delta2 = float(np.mean([np.sum((g - mean_grad) ** 2) for g in full]))

    sigma2 = 0.0
    count = 0
    for i, batches in enumerate(sample_batches or []):
        for b in batches:
            g = oracles[i].grad(p, b)
            sigma2 += float(np.sum((g - full[i]) ** 2))
            count += 1
    sigma2 = sigma2 / count if count else 0.0
    return VarianceDiagnostics(sigma2_hat=sigma2, delta2_hat=delta2)


# The cross-gradient family sends two payloads per directed edge per round
# (model out, cross-gradient back) and compresses only the second.
_TWO_ROUND_ALGORITHMS = frozenset({"ngm", "n_saddle", "comp_ngm", "comp_n_saddle"})


def cost_ratio(
    op: CompressionOp | None,
    blocks: tuple[Block, ...],
    two_round: bool = False,
) -> float:
    """Uncompressed-to-compressed bit ratio per directed edge per round."""
    raw = bit_cost(identity_op(), blocks)
    if op is None or op.is_identity:
        return 1.0
    compressed = bit_cost(op, blocks)
    if two_round:
        return (2.0 * raw) / (raw + compressed)
    return raw / compressed


@dataclass(frozen=True)
class CommCostReport:
    total_bits: int
    bits_per_agent: float
    gb_per_agent: float
    ratio_vs_uncompressed: float


def comm_cost_report(log: MetricsLog, config) -> CommCostReport:
    """Figure-of-merit communication summary for a completed run."""
    total = int(log.final_row.bits_transmitted_cumulative)
    n = config.topology.n_agents
    per_agent = total / n
    blocks = config.oracles[0].layout
    ratio = cost_ratio(
        config.compression,
        blocks,
        two_round=config.algorithm in _TWO_ROUND_ALGORITHMS,
    )
    return CommCostReport(
        total_bits=total,
        bits_per_agent=per_agent,
        gb_per_agent=per_agent / _BITS_PER_GB,
        ratio_vs_uncompressed=ratio,
    )


def format_value(value) -> str:
    """Canonical CSV cell text: ints verbatim, floats via repr round-trip."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_rounds_csv(log: MetricsLog, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUND_COLUMNS)
        for row in log.rows:
            writer.writerow([format_value(v) for v in row.values()])


def read_rounds_csv(path) -> list[RoundRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SaddleError(f"{path}: empty rounds CSV") from None
        if tuple(header) != ROUND_COLUMNS:
            raise SaddleError(f"{path}: unexpected header {header}")
        rows = []
        for line in reader:
            if len(line) != len(ROUND_COLUMNS):
                raise SaddleError(f"{path}: row has {len(line)} fields")
            rows.append(
                RoundRow(
                    round=int(line[0]),
                    train_loss_mean=float(line[1]),
                    test_acc_consensus=float(line[2]),
                    consensus_error=float(line[3]),
                    grad_norm_mean=float(line[4]),
                    compression_error_sum=float(line[5]),
                    update_norm_sum=float(line[6]),
                    bits_transmitted_cumulative=int(line[7]),
                )
            )
    return rows


def write_diagnostics_csv(log: MetricsLog, path) -> None:
    """End-of-run diagnostics as (metric, round, value) rows."""
    last_round = log.rows[-1].round if log.rows else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("metric", "round", "value"))
        for rnd, value in log.lambda_max_samples:
            writer.writerow(("lambda_max", str(int(rnd)), format_value(value)))
        if log.sigma2_hat is not None:
            writer.writerow(("sigma2_hat", str(last_round), format_value(log.sigma2_hat)))
        if log.delta2_hat is not None:
            writer.writerow(("delta2_hat", str(last_round), format_value(log.delta2_hat)))
        writer.writerow(("diverged", str(last_round), format_value(float(log.diverged))))


def write_surface_csv(coords: np.ndarray, grid: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("a", "b", "loss"))
        for i, a in enumerate(coords):
            for j, b in enumerate(coords):
                writer.writerow(
                    (format_value(a), format_value(b), format_value(grid[i, j]))
                )


def read_surface_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["a", "b", "loss"]:
            raise SaddleError(f"{path}: unexpected surface header {header}")
        entries = [(float(a), float(b), float(z)) for a, b, z in reader]
    if not entries:
        raise SaddleError(f"{path}: empty surface CSV")
    coords = np.array(sorted({a for a, _, _ in entries}))
    k = coords.size
    if len(entries) != k * k:
        raise SaddleError(f"{path}: surface is not a full {k}x{k} grid")
    index = {a: i for i, a in enumerate(coords)}
    grid = np.empty((k, k))
    for a, b, z in entries:
        grid[index[a], index[b]] = z
    return coords, grid
