"""Scikit-learn-style facade over the decentralized training engines.

``DecentralizedClassifier`` partitions the training set across simulated
agents, runs the selected gossip algorithm to convergence, and serves
predictions from the consensus (averaged) parameters. It follows the
scikit-learn estimator contract: hyperparameters are stored verbatim in
``__init__``, all validation happens in ``fit``, and fitted state lives in
trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .algorithms import RunConfig, run
from .compression import CompressionOp, sign_scaled, stochastic_quant, top_k
from .datagen import Dataset, iid_partition, partition_dirichlet
from .errors import DivergenceError, SaddleError
from .models import LogisticRegressionOracle, MLPOracle
from .optim import parse_lr_schedule
from .topology import build_complete, build_ring, build_torus

__all__ = ["DecentralizedClassifier"]


def _resolve_compression(spec) -> CompressionOp | None:
    if spec is None or isinstance(spec, CompressionOp):
        return spec
    if isinstance(spec, str):
        if spec == "sign":
            return sign_scaled()
        kind, sep, arg = spec.partition(":")
        if sep:
            try:
                if kind == "quant":
                    return stochastic_quant(int(arg))
                if kind == "topk":
                    return top_k(float(arg))
            except (ValueError, SaddleError) as exc:
                raise ValueError(f"bad compression spec {spec!r}: {exc}") from exc
    raise ValueError(
        "compression must be None, a CompressionOp, 'sign', 'quant:<bits>' "
        f"or 'topk:<fraction>'; got {spec!r}"
    )


class DecentralizedClassifier(ClassifierMixin, BaseEstimator):
    """Classifier trained by simulated decentralized gossip optimization.

    Parameters mirror the run configuration: the algorithm name, the agent
    count and topology, optimizer constants, an optional compression
    operator for the comp_* algorithms, and the local model (multinomial
    logistic regression or a one-hidden-layer MLP). ``mu=None`` couples the
    gossip-momentum constant to ``beta``. After ``fit`` the consensus
    parameter vector is in ``params_`` and the per-round metrics log in
    ``metrics_``.
    """

    def __init__(
        self,
        algorithm: str = "qgm",
        n_agents: int = 4,
        topology: str = "ring",
        torus_rows: int | None = None,
        torus_cols: int | None = None,
        rounds: int = 200,
        eta: float = 0.05,
        rho: float = 0.0,
        beta: float = 0.9,
        mu: float | None = None,
        gamma: float = 1.0,
        batch_size: int = 0,
        compression=None,
        model: str = "logreg",
        hidden: int = 16,
        partition: str = "iid",
        alpha: float | None = None,
        lr_schedule: str | None = None,
        nesterov: bool = False,
        seed: int = 0,
    ):
        self.algorithm = algorithm
        self.n_agents = n_agents
        self.topology = topology
        self.torus_rows = torus_rows
        self.torus_cols = torus_cols
        self.rounds = rounds
        self.eta = eta
        self.rho = rho
        self.beta = beta
        self.mu = mu
        self.gamma = gamma
        self.batch_size = batch_size
        self.compression = compression
        self.model = model
        self.hidden = hidden
        self.partition = partition
        self.alpha = alpha
        self.lr_schedule = lr_schedule
        self.nesterov = nesterov
        self.seed = seed

    def _build_topology(self):
        if self.topology == "ring":
            return build_ring(self.n_agents)
        if self.topology == "complete":
            return build_complete(self.n_agents)
        if self.topology == "torus":
            if self.torus_rows is None or self.torus_cols is None:
                raise ValueError("topology 'torus' needs torus_rows and torus_cols")
            if self.torus_rows * self.torus_cols != self.n_agents:
                raise ValueError("torus_rows * torus_cols must equal n_agents")
            return build_torus(self.torus_rows, self.torus_cols)
        raise ValueError(
            f"topology must be ring, torus or complete; got {self.topology!r}"
        )

    def fit(self, X, y) -> "DecentralizedClassifier":
        """Partition (X, y) across the agents and train to consensus."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes to fit a classifier")
        encoded = np.searchsorted(self.classes_, y)
        self.n_features_in_ = X.shape[1]

        train = Dataset(
            features=X,
            labels=encoded,
            n_classes=len(self.classes_),
            split="train",
        )
        if self.partition == "iid":
            plan = iid_partition(train, self.n_agents, self.seed)
        elif self.partition == "dirichlet":
            if self.alpha is None:
                raise ValueError("partition 'dirichlet' needs alpha")
            plan = partition_dirichlet(train, self.n_agents, self.alpha, self.seed)
        else:
            raise ValueError(
                f"partition must be iid or dirichlet; got {self.partition!r}"
            )

        if self.model == "logreg":
            oracle = LogisticRegressionOracle(train.d_in, train.n_classes)
        elif self.model == "mlp":
            oracle = MLPOracle(train.d_in, self.hidden, train.n_classes)
        else:
            raise ValueError(f"model must be logreg or mlp; got {self.model!r}")

        schedule = (
            parse_lr_schedule(self.lr_schedule)
            if self.lr_schedule is not None
            else None
        )
        config = RunConfig(
            algorithm=self.algorithm,
            topology=self._build_topology(),
            oracles=(oracle,) * self.n_agents,
            eta=self.eta,
            rounds=self.rounds,
            seed=self.seed,
            rho=self.rho,
            beta=self.beta,
            mu=self.beta if self.mu is None else self.mu,
            gamma=self.gamma,
            batch_size=self.batch_size,
            compression=_resolve_compression(self.compression),
            train=train,
            test=None,
            shards=tuple(plan.shard_indices(i) for i in range(self.n_agents)),
            lr_schedule=schedule,
            nesterov=self.nesterov,
        )
        result = run(config)
        if result.log.diverged:
            raise DivergenceError(
                "training diverged (non-finite parameters); lower eta or "
                "check the configuration"
            )
        self.oracle_ = oracle
        self.params_ = result.consensus
        self.agent_params_ = result.params
        self.metrics_ = result.log
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities from the consensus parameters."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features; expected {self.n_features_in_}"
            )
        return self.oracle_.predict_proba(self.params_, X)

    def predict(self, X) -> np.ndarray:
        """Most probable class per row, in the original label space."""
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
