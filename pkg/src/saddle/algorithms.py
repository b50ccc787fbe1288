"""Synchronous-round decentralized training engines.

Five engines cover ten algorithm names: each sharpness-aware variant is its
plain counterpart with rho > 0, so both names dispatch to one code path and
the rho = 0 trajectories coincide bit for bit. Rounds are lockstep: compute,
exchange, mix, with per-agent rng streams keyed by (tag, seed, agent, round)
so determinism never depends on execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compression import (
    CompressionOp,
    ErrorFeedbackState,
    apply_error_feedback,
    compress,
)
from .datagen import Dataset
from .errors import SaddleError
from .metrics import (
    MetricsLog,
    RoundRow,
    block_norm_sum,
    consensus_error,
    lambda_max,
    variance_diagnostics,
)
from .models import Batch, GradOracle
from .optim import LrSchedule, MomentumState, sam_gradient
from .rngs import TAG_BATCH, TAG_COMPRESS, TAG_INIT, TAG_METRICS, stream
from .topology import MixingMatrix

__all__ = [
    "ALGORITHMS",
    "COMPRESSED_ALGORITHMS",
    "SAM_ALGORITHMS",
    "MOMENTUM_ALGORITHMS",
    "TWO_ROUND_ALGORITHMS",
    "Hyper",
    "AgentState",
    "RunConfig",
    "RoundStats",
    "RunResult",
    "step_dpsgd",
    "step_q_saddle",
    "step_comp_q_saddle",
    "step_n_saddle",
    "step_comp_n_saddle",
    "run",
]

ALGORITHMS = (
    "dpsgd",
    "d_saddle",
    "qgm",
    "q_saddle",
    "comp_qgm",
    "comp_q_saddle",
    "ngm",
    "n_saddle",
    "comp_ngm",
    "comp_n_saddle",
)
COMPRESSED_ALGORITHMS = frozenset(
    {"comp_qgm", "comp_q_saddle", "comp_ngm", "comp_n_saddle"}
)
SAM_ALGORITHMS = frozenset(
    {"d_saddle", "q_saddle", "comp_q_saddle", "n_saddle", "comp_n_saddle"}
)
TWO_ROUND_ALGORITHMS = frozenset({"ngm", "n_saddle", "comp_ngm", "comp_n_saddle"})
MOMENTUM_ALGORITHMS = frozenset(ALGORITHMS) - {"dpsgd", "d_saddle"}

# How many evaluation samples the sharpness checkpoint may use.
_LAMBDA_EVAL_CAP = 1024
# Minibatches per agent drawn for the sigma2 estimate.
_VARIANCE_SAMPLES = 8


@dataclass(frozen=True)
class Hyper:
    """Per-round scalar hyperparameters shared by every agent."""

    eta: float
    rho: float
    beta: float
    mu: float
    gamma: float
    nesterov: bool = False


@dataclass
class AgentState:
    """One agent: parameters plus whatever per-algorithm memory it owns.

    xhat maps holder-visible agent id -> running estimate of that agent's
    params (self included); error_feedback maps payload target id -> residual.
    Both exist only for the compressed engines.
    """

    id: int
    params: np.ndarray
    momentum: MomentumState | None = None
    xhat: dict[int, np.ndarray] | None = None
    error_feedback: dict[int, ErrorFeedbackState] | None = None
    shard: np.ndarray | None = None


@dataclass(frozen=True)
class RoundStats:
    grad_norm_sum: float
    compression_error_sum: float
    update_norm_sum: float
    bits: int


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything one deterministic run needs.

    oracles has one entry per agent; data-driven problems repeat one shared
    oracle and carry train/test/shards, while batch-free problems (quadratics)
    use per-agent oracles with no dataset.
    """

    algorithm: str
    topology: MixingMatrix
    oracles: tuple[GradOracle, ...]
    eta: float
    rounds: int
    seed: int = 0
    rho: float = 0.0
    beta: float = 0.0
    mu: float = 0.0
    gamma: float = 1.0
    batch_size: int = 0
    compression: CompressionOp | None = None
    train: Dataset | None = None
    test: Dataset | None = None
    shards: tuple[np.ndarray, ...] | None = None
    lr_schedule: LrSchedule | None = None
    nesterov: bool = False
    lambda_max_rounds: tuple[int, ...] = ()
    variance_diagnostics: bool = False

    @property
    def n_agents(self) -> int:
        return self.topology.n_agents

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise SaddleError(f"unknown algorithm {self.algorithm!r}")
        n = self.topology.n_agents
        if len(self.oracles) != n:
            raise SaddleError(f"need {n} oracles, got {len(self.oracles)}")
        dim = self.oracles[0].dim
        if any(o.dim != dim for o in self.oracles):
            raise SaddleError("all agent oracles must share one parameter dim")
        if self.rounds < 0:
            raise SaddleError(f"rounds must be >= 0, got {self.rounds}")
        if self.eta <= 0:
            raise SaddleError(f"eta must be > 0, got {self.eta}")
        if self.rho < 0:
            raise SaddleError(f"rho must be >= 0, got {self.rho}")
        if self.algorithm not in SAM_ALGORITHMS and self.rho != 0.0:
            raise SaddleError(f"{self.algorithm} requires rho = 0")
        for name, value in (("beta", self.beta), ("mu", self.mu)):
            if not 0.0 <= value < 1.0:
                raise SaddleError(f"{name} must lie in [0, 1), got {value}")
        if self.algorithm in ("dpsgd", "d_saddle") and (self.beta or self.mu):
            raise SaddleError(f"{self.algorithm} has no momentum; beta = mu = 0")
        if not 0.0 < self.gamma <= 1.0:
            raise SaddleError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.batch_size < 0:
            raise SaddleError(f"batch_size must be >= 0, got {self.batch_size}")
        if self.seed < 0:
            raise SaddleError(f"seed must be >= 0, got {self.seed}")
        if self.algorithm in COMPRESSED_ALGORITHMS:
            if self.compression is None:
                raise SaddleError(f"{self.algorithm} requires a compression op")
        elif self.compression is not None:
            raise SaddleError(f"{self.algorithm} does not take a compression op")
        if self.train is not None:
            if self.shards is None or len(self.shards) != n:
                raise SaddleError("data runs need one shard index array per agent")
            for i, shard in enumerate(self.shards):
                idx = np.asarray(shard)
                if idx.size == 0:
                    raise SaddleError(f"agent {i} has an empty shard")
                if idx.min() < 0 or idx.max() >= len(self.train):
                    raise SaddleError(f"agent {i} shard indexes out of range")
        else:
            if self.shards is not None:
                raise SaddleError("shards given without a train dataset")
            if self.batch_size != 0:
                raise SaddleError("batch_size requires a train dataset")
        for r in self.lambda_max_rounds:
            if not 0 <= r <= self.rounds:
                raise SaddleError(f"lambda_max round {r} outside [0, {self.rounds}]")


@dataclass(frozen=True)
class RunResult:
    """Final state plus the metrics log of one run."""

    log: MetricsLog
    params: tuple[np.ndarray, ...]
    consensus: np.ndarray
    param_history: tuple[np.ndarray, ...] | None = None


def _degree(w: MixingMatrix, i: int) -> int:
    return len(w.neighbors(i))


def _raw_payload_bits(dim: int) -> int:
    # Uncompressed payloads are priced like the identity operator: 32 bits/value.
    return 32 * dim


def _mix_rows(w: np.ndarray, vectors: list[np.ndarray]) -> list[np.ndarray]:
    stacked = np.stack(vectors)
    mixed = w @ stacked
    return [mixed[i] for i in range(len(vectors))]


def step_dpsgd(agents, w: MixingMatrix, hyper: Hyper, oracles, batches) -> RoundStats:
    """Gossip SGD: local (SAM-)gradient half-step, then one W-average."""
    return _step_gossip(agents, w, hyper, oracles, batches, momentum=False)


def step_q_saddle(agents, w: MixingMatrix, hyper: Hyper, oracles, batches) -> RoundStats:
    """Quasi-global momentum step; rho = 0 gives plain QGM, rho > 0 Q-SADDLe."""
    return _step_gossip(agents, w, hyper, oracles, batches, momentum=True)


def _step_gossip(agents, w, hyper, oracles, batches, momentum: bool) -> RoundStats:
    grads = [
        sam_gradient(oracles[a.id], a.params, batches[a.id], hyper.rho)
        for a in agents
    ]
    if momentum:
        directions = [a.momentum.step_direction(g) for a, g in zip(agents, grads)]
    else:
        directions = grads
    halves = [a.params - hyper.eta * d for a, d in zip(agents, directions)]
    mixed = _mix_rows(w.weights, halves)
    dim = agents[0].params.size
    bits = sum(_degree(w, a.id) for a in agents) * _raw_payload_bits(dim)
    for a, new_params in zip(agents, mixed):
        if momentum:
            a.momentum.absorb_displacement(a.params, new_params, hyper.eta)
        a.params = new_params
    return RoundStats(
        grad_norm_sum=float(sum(np.linalg.norm(g) for g in grads)),
        compression_error_sum=0.0,
        update_norm_sum=0.0,
        bits=bits,
    )


def step_comp_q_saddle(
    agents, w: MixingMatrix, hyper: Hyper, oracles, batches, op, seed, round_index
) -> RoundStats:
    """Compressed gossip tracking: mix x-hat copies, broadcast compressed deltas.

    All mixing reads this round's copies; copy updates land strictly after, so
    every holder's estimate of agent j stays identical to every other holder's.
    """
    weights = w.weights
    grads = [
        sam_gradient(oracles[a.id], a.params, batches[a.id], hyper.rho)
        for a in agents
    ]
    directions = [a.momentum.step_direction(g) for a, g in zip(agents, grads)]
    halves = [a.params - hyper.eta * d for a, d in zip(agents, directions)]

    new_params = []
    for a, half in zip(agents, halves):
        drift = np.zeros_like(half)
        own = a.xhat[a.id]
        for j in w.neighbors(a.id):
            drift += weights[a.id, j] * (a.xhat[j] - own)
        new_params.append(half + hyper.gamma * drift)

    error_sum = 0.0
    update_sum = 0.0
    bits = 0
    decoded = {}
    for a, target_params in zip(agents, new_params):
        blocks = oracles[a.id].layout
        payload = target_params - a.xhat[a.id]
        msg = compress(
            op, payload, blocks, rng=stream(TAG_COMPRESS, seed, a.id, round_index)
        )
        decoded[a.id] = msg.decode()
        bits += _degree(w, a.id) * msg.bit_cost
        error_sum += block_norm_sum(decoded[a.id] - payload, blocks)
        update_sum += block_norm_sum(payload, blocks)

    for a, target_params in zip(agents, new_params):
        a.momentum.absorb_displacement(a.params, target_params, hyper.eta)
        a.params = target_params
    for sender in agents:
        for holder_id in (*w.neighbors(sender.id), sender.id):
            holder = agents[holder_id]
            holder.xhat[sender.id] = holder.xhat[sender.id] + decoded[sender.id]

    return RoundStats(
        grad_norm_sum=float(sum(np.linalg.norm(g) for g in grads)),
        compression_error_sum=error_sum,
        update_norm_sum=update_sum,
        bits=bits,
    )


def step_n_saddle(agents, w: MixingMatrix, hyper: Hyper, oracles, batches) -> RoundStats:
    """Cross-gradient step: models out, per-neighbor gradients back, local momentum."""
    weights = w.weights
    start = [a.params.copy() for a in agents]
    dim = start[0].size
    bits = sum(_degree(w, a.id) for a in agents) * _raw_payload_bits(dim)

    # cross[i][t]: gradient of model t on agent i's data, SAM-perturbed per payload
    cross = [
        {
            t: sam_gradient(oracles[a.id], start[t], batches[a.id], hyper.rho)
            for t in (a.id, *w.neighbors(a.id))
        }
        for a in agents
    ]
    bits += sum(_degree(w, a.id) for a in agents) * _raw_payload_bits(dim)

    aggregated = [
        sum(weights[a.id, j] * cross[j][a.id] for j in (a.id, *w.neighbors(a.id)))
        for a in agents
    ]
    _apply_n_family_update(agents, weights, hyper, start, aggregated)
    return RoundStats(
        grad_norm_sum=float(sum(np.linalg.norm(g) for g in aggregated)),
        compression_error_sum=0.0,
        update_norm_sum=0.0,
        bits=bits,
    )


def step_comp_n_saddle(
    agents, w: MixingMatrix, hyper: Hyper, oracles, batches, op, seed, round_index
) -> RoundStats:
    """Cross-gradient step with the gradient round compressed under error feedback.

    Models still travel uncompressed; each (computing agent, model owner) pair
    keeps its own residual, the self payload included, though only payloads
    that actually cross an edge are charged bits.
    """
    weights = w.weights
    start = [a.params.copy() for a in agents]
    dim = start[0].size
    bits = sum(_degree(w, a.id) for a in agents) * _raw_payload_bits(dim)

    error_sum = 0.0
    update_sum = 0.0
    decoded = [dict() for _ in agents]
    for a in agents:
        blocks = oracles[a.id].layout
        for t in (a.id, *w.neighbors(a.id)):
            grad = sam_gradient(oracles[a.id], start[t], batches[a.id], hyper.rho)
            target = grad + a.error_feedback[t].residual
            msg, a.error_feedback[t] = apply_error_feedback(
                grad,
                a.error_feedback[t],
                op,
                blocks,
                rng=stream(TAG_COMPRESS, seed, a.id, round_index, t),
            )
            decoded[a.id][t] = msg.decode()
            if t != a.id:
                bits += msg.bit_cost
            error_sum += block_norm_sum(decoded[a.id][t] - target, blocks)
            update_sum += block_norm_sum(target, blocks)

    aggregated = [
        sum(weights[a.id, j] * decoded[j][a.id] for j in (a.id, *w.neighbors(a.id)))
        for a in agents
    ]
    _apply_n_family_update(agents, weights, hyper, start, aggregated)
    return RoundStats(
        grad_norm_sum=float(sum(np.linalg.norm(g) for g in aggregated)),
        compression_error_sum=error_sum,
        update_norm_sum=update_sum,
        bits=bits,
    )


def _apply_n_family_update(agents, weights, hyper, start, aggregated) -> None:
    mixed_start = _mix_rows(weights, start)
    for a, g in zip(agents, aggregated):
        m = a.momentum.local_update(g)
        direction = g + hyper.beta * m if hyper.nesterov else m
        half = a.params - hyper.eta * direction
        a.params = half + hyper.gamma * (mixed_start[a.id] - start[a.id])


def _make_agents(config: RunConfig, init: np.ndarray) -> list[AgentState]:
    n = config.n_agents
    dim = init.size
    agents = []
    for i in range(n):
        momentum = None
        if config.algorithm in MOMENTUM_ALGORITHMS:
            momentum = MomentumState(beta=config.beta, mu=config.mu).init_zero(dim)
        xhat = None
        error_feedback = None
        if config.algorithm in ("comp_qgm", "comp_q_saddle"):
            xhat = {
                j: np.zeros(dim)
                for j in (i, *config.topology.neighbors(i))
            }
        if config.algorithm in ("comp_ngm", "comp_n_saddle"):
            error_feedback = {
                t: ErrorFeedbackState.zeros(dim)
                for t in (i, *config.topology.neighbors(i))
            }
        shard = (
            np.asarray(config.shards[i], dtype=np.int64)
            if config.shards is not None
            else None
        )
        agents.append(
            AgentState(
                id=i,
                params=init.copy(),
                momentum=momentum,
                xhat=xhat,
                error_feedback=error_feedback,
                shard=shard,
            )
        )
    return agents


def _full_batch(config: RunConfig, agent: AgentState) -> Batch | None:
    if config.train is None:
        return None
    idx = agent.shard
    return Batch(
        indices=idx,
        features=config.train.features[idx],
        labels=config.train.labels[idx],
    )


def _sample_batch(
    config: RunConfig, agent: AgentState, full: Batch | None, round_index: int
) -> Batch | None:
    if config.train is None:
        return None
    size = config.batch_size
    if size == 0 or size >= agent.shard.size:
        return full
    rng = stream(TAG_BATCH, config.seed, agent.id, round_index)
    picked = agent.shard[rng.choice(agent.shard.size, size=size, replace=False)]
    return Batch(
        indices=picked,
        features=config.train.features[picked],
        labels=config.train.labels[picked],
    )


def _train_loss_mean(config, agents, full_batches) -> float:
    losses = [
        config.oracles[a.id].loss(a.params, full_batches[a.id]) for a in agents
    ]
    return float(np.mean(losses))


def _test_accuracy(config: RunConfig, consensus: np.ndarray) -> float:
    if config.test is None:
        return 0.0
    oracle = config.oracles[0]
    if not hasattr(oracle, "predict_proba"):
        return 0.0
    proba = oracle.predict_proba(consensus, config.test.features)
    predicted = np.argmax(proba, axis=1)
    return float(np.mean(predicted == config.test.labels))


def _consensus(agents) -> np.ndarray:
    return np.mean([a.params for a in agents], axis=0)


def _lambda_eval_batch(config: RunConfig) -> Batch | None:
    if config.train is None:
        return None
    total = len(config.train)
    if total <= _LAMBDA_EVAL_CAP:
        idx = np.arange(total)
    else:
        rng = stream(TAG_METRICS, config.seed, 0)
        idx = np.sort(rng.choice(total, size=_LAMBDA_EVAL_CAP, replace=False))
    return Batch(
        indices=idx,
        features=config.train.features[idx],
        labels=config.train.labels[idx],
    )


def _checkpoint_lambda(config, agents, round_index, eval_batch, log) -> None:
    consensus = _consensus(agents)
    if config.train is not None:
        oracle = config.oracles[0]
        hv = lambda v: oracle.hvp(consensus, eval_batch, v)  # noqa: E731
    else:
        oracles = config.oracles
        hv = lambda v: np.mean(  # noqa: E731
            [o.hvp(consensus, None, v) for o in oracles], axis=0
        )
    value = lambda_max(
        hv,
        consensus,
        rng=stream(TAG_METRICS, config.seed, 1, round_index),
    )
    log.lambda_max_samples.append((round_index, value))


def _end_of_run_variance(config, agents, full_batches, log) -> None:
    consensus = _consensus(agents)
    sample_batches = None
    if config.batch_size > 0 and config.train is not None:
        sample_batches = []
        for a in agents:
            per_agent = []
            if config.batch_size < a.shard.size:
                for k in range(_VARIANCE_SAMPLES):
                    rng = stream(TAG_METRICS, config.seed, 2, a.id, k)
                    picked = a.shard[
                        rng.choice(a.shard.size, size=config.batch_size, replace=False)
                    ]
                    per_agent.append(
                        Batch(
                            indices=picked,
                            features=config.train.features[picked],
                            labels=config.train.labels[picked],
                        )
                    )
            sample_batches.append(per_agent)
    diag = variance_diagnostics(
        config.oracles, consensus, full_batches, sample_batches
    )
    log.sigma2_hat = diag.sigma2_hat
    log.delta2_hat = diag.delta2_hat


def _round_row(config, agents, full_batches, round_index, stats, bits_total):
    consensus = _consensus(agents)
    return RoundRow(
        round=round_index,
        train_loss_mean=_train_loss_mean(config, agents, full_batches),
        test_acc_consensus=_test_accuracy(config, consensus),
        consensus_error=consensus_error(agents),
        grad_norm_mean=stats.grad_norm_sum / config.n_agents,
        compression_error_sum=stats.compression_error_sum,
        update_norm_sum=stats.update_norm_sum,
        bits_transmitted_cumulative=bits_total,
    )


_ZERO_STATS = RoundStats(0.0, 0.0, 0.0, 0)


def run(config: RunConfig, record_params: bool = False) -> RunResult:
    """Execute T synchronous rounds and log metrics; deterministic per config."""
    init = config.oracles[0].init_params(stream(TAG_INIT, config.seed))
    agents = _make_agents(config, init)
    full_batches = [_full_batch(config, a) for a in agents]
    eval_batch = _lambda_eval_batch(config) if config.lambda_max_rounds else None

    log = MetricsLog()
    log.rows.append(_round_row(config, agents, full_batches, 0, _ZERO_STATS, 0))
    if 0 in config.lambda_max_rounds:
        _checkpoint_lambda(config, agents, 0, eval_batch, log)
    history = [np.stack([a.params for a in agents])] if record_params else None

    bits_total = 0
    for t in range(config.rounds):
        eta = (
            config.lr_schedule.at(t, config.rounds, config.eta)
            if config.lr_schedule
            else config.eta
        )
        hyper = Hyper(
            eta=eta,
            rho=config.rho,
            beta=config.beta,
            mu=config.mu,
            gamma=config.gamma,
            nesterov=config.nesterov,
        )
        batches = [
            _sample_batch(config, a, full_batches[a.id], t) for a in agents
        ]
        alg = config.algorithm
        if alg in ("dpsgd", "d_saddle"):
            stats = step_dpsgd(agents, config.topology, hyper, config.oracles, batches)
        elif alg in ("qgm", "q_saddle"):
            stats = step_q_saddle(
                agents, config.topology, hyper, config.oracles, batches
            )
        elif alg in ("comp_qgm", "comp_q_saddle"):
            stats = step_comp_q_saddle(
                agents, config.topology, hyper, config.oracles, batches,
                config.compression, config.seed, t,
            )
        elif alg in ("ngm", "n_saddle"):
            stats = step_n_saddle(
                agents, config.topology, hyper, config.oracles, batches
            )
        else:
            stats = step_comp_n_saddle(
                agents, config.topology, hyper, config.oracles, batches,
                config.compression, config.seed, t,
            )

        if not all(np.all(np.isfinite(a.params)) for a in agents):
            log.diverged = True
            break
        bits_total += stats.bits
        row = _round_row(config, agents, full_batches, t + 1, stats, bits_total)
        if not row.is_finite():
            log.diverged = True
            break
        log.rows.append(row)
        if record_params:
            history.append(np.stack([a.params for a in agents]))
        if (t + 1) in config.lambda_max_rounds:
            _checkpoint_lambda(config, agents, t + 1, eval_batch, log)

    if config.variance_diagnostics and not log.diverged:
        _end_of_run_variance(config, agents, full_batches, log)

    return RunResult(
        log=log,
        params=tuple(a.params.copy() for a in agents),
        consensus=_consensus(agents),
        param_history=tuple(history) if history is not None else None,
    )
