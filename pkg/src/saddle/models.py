"""Differentiable objectives exposing loss, gradient, and Hessian-vector products.

Each oracle works on a flat float64 parameter vector whose block layout it
declares. Gradients are exact closed forms; Hessian-vector products default to
a central finite difference of gradients, which the quadratic oracle overrides
with its exact matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SaddleError
from .params import Block, check_layout, single_block

__all__ = [
    "Batch",
    "GradOracle",
    "QuadraticOracle",
    "LogisticRegressionOracle",
    "MLPOracle",
]


@dataclass(frozen=True)
class Batch:
    """Resolved minibatch: indices into an agent's shard plus the rows themselves."""

    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @staticmethod
    def from_arrays(features: np.ndarray, labels: np.ndarray, indices=None) -> "Batch":
        if indices is None:
            indices = np.arange(labels.shape[0])
        return Batch(
            indices=np.asarray(indices),
            features=np.asarray(features, dtype=float),
            labels=np.asarray(labels, dtype=np.int64),
        )

    def __len__(self) -> int:
        return self.labels.shape[0]


class GradOracle:
    """Base oracle over a flat parameter vector with a named block layout."""

    layout: tuple[Block, ...]
    dim: int

    def loss(self, params: np.ndarray, batch: Batch) -> float:
        raise NotImplementedError

    def grad(self, params: np.ndarray, batch: Batch) -> np.ndarray:
        raise NotImplementedError

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def hvp(self, params: np.ndarray, batch: Batch, v: np.ndarray) -> np.ndarray:
        """Central finite difference of gradients along v."""
        v = np.asarray(v, dtype=float)
        norm_v = float(np.linalg.norm(v))
        if norm_v == 0.0:
            return np.zeros_like(v)
        eps = 1e-4 * max(1.0, float(np.linalg.norm(params)))
        unit = v / norm_v
        g_plus = self.grad(params + eps * unit, batch)
        g_minus = self.grad(params - eps * unit, batch)
        return (g_plus - g_minus) * (norm_v / (2.0 * eps))

    def _check_params(self, params: np.ndarray) -> np.ndarray:
        p = np.asarray(params, dtype=float)
        if p.shape != (self.dim,):
            raise SaddleError(f"params shape {p.shape} != ({self.dim},)")
        return p

    @staticmethod
    def _check_batch(batch: Batch, d_in: int) -> None:
        if len(batch) == 0:
            raise SaddleError("batch must be non-empty")
        if batch.features.shape[1] != d_in:
            raise SaddleError(
                f"batch features have {batch.features.shape[1]} columns, expected {d_in}"
            )


class QuadraticOracle(GradOracle):
    """f(x) = 0.5 (x - c)^T A (x - c) with symmetric PSD A; ignores the batch."""

    def __init__(self, a: np.ndarray, c: np.ndarray):
        a = np.asarray(a, dtype=float)
        c = np.asarray(c, dtype=float).ravel()
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != c.shape[0]:
            raise SaddleError(f"A {a.shape} and c {c.shape} are inconsistent")
        if not np.allclose(a, a.T, atol=1e-12):
            raise SaddleError("A must be symmetric")
        self.a = a
        self.c = c
        self.dim = c.shape[0]
        self.layout = single_block(self.dim)

    def loss(self, params, batch=None) -> float:
        x = self._check_params(params)
        r = x - self.c
        return float(0.5 * r @ self.a @ r)

    def grad(self, params, batch=None) -> np.ndarray:
        x = self._check_params(params)
        return self.a @ (x - self.c)

    def hvp(self, params, batch, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.a @ v

    def init_params(self, rng) -> np.ndarray:
        return rng.normal(size=self.dim)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class LogisticRegressionOracle(GradOracle):
    """Multiclass softmax regression; blocks "w" (C x d_in) and "b" (C)."""

    def __init__(self, d_in: int, n_classes: int):
        if d_in < 1 or n_classes < 2:
            raise SaddleError("need d_in >= 1 and n_classes >= 2")
        self.d_in = d_in
        self.n_classes = n_classes
        wlen = n_classes * d_in
        self.layout = (Block("w", 0, wlen), Block("b", wlen, n_classes))
        self.dim = wlen + n_classes
        check_layout(self.layout, self.dim)

    def _unpack(self, params):
        w = params[: self.n_classes * self.d_in].reshape(self.n_classes, self.d_in)
        b = params[self.n_classes * self.d_in :]
        return w, b

    def _logits(self, params, batch):
        w, b = self._unpack(params)
        return batch.features @ w.T + b

    def loss(self, params, batch) -> float:
        p = self._check_params(params)
        self._check_batch(batch, self.d_in)
        logp = _log_softmax(self._logits(p, batch))
        return float(-logp[np.arange(len(batch)), batch.labels].mean())

    def grad(self, params, batch) -> np.ndarray:
        p = self._check_params(params)
        self._check_batch(batch, self.d_in)
        probs = np.exp(_log_softmax(self._logits(p, batch)))
        probs[np.arange(len(batch)), batch.labels] -= 1.0
        probs /= len(batch)
        gw = probs.T @ batch.features
        gb = probs.sum(axis=0)
        return np.concatenate([gw.ravel(), gb])

    def predict_proba(self, params: np.ndarray, features: np.ndarray) -> np.ndarray:
        p = self._check_params(params)
        batch = Batch.from_arrays(features, np.zeros(features.shape[0], dtype=np.int64))
        return np.exp(_log_softmax(self._logits(p, batch)))

    def init_params(self, rng) -> np.ndarray:
        w = rng.normal(scale=1.0 / np.sqrt(self.d_in), size=self.n_classes * self.d_in)
        return np.concatenate([w, np.zeros(self.n_classes)])


class MLPOracle(GradOracle):
    """One tanh hidden layer + softmax cross-entropy, manual backprop.

    Blocks: "w1" (hidden x d_in), "b1" (hidden), "w2" (C x hidden), "b2" (C).
    """

    def __init__(self, d_in: int, hidden: int, n_classes: int):
        if d_in < 1 or hidden < 1 or n_classes < 2:
            raise SaddleError("need d_in >= 1, hidden >= 1, n_classes >= 2")
        self.d_in = d_in
        self.hidden = hidden
        self.n_classes = n_classes
        sizes = [
            ("w1", hidden * d_in),
            ("b1", hidden),
            ("w2", n_classes * hidden),
            ("b2", n_classes),
        ]
        layout, offset = [], 0
        for name, length in sizes:
            layout.append(Block(name, offset, length))
            offset += length
        self.layout = tuple(layout)
        self.dim = offset
        check_layout(self.layout, self.dim)

    def _unpack(self, params):
        h, d, c = self.hidden, self.d_in, self.n_classes
        w1 = params[: h * d].reshape(h, d)
        b1 = params[h * d : h * d + h]
        w2 = params[h * d + h : h * d + h + c * h].reshape(c, h)
        b2 = params[h * d + h + c * h :]
        return w1, b1, w2, b2

    def _forward(self, params, batch):
        w1, b1, w2, b2 = self._unpack(params)
        act = np.tanh(batch.features @ w1.T + b1)
        logits = act @ w2.T + b2
        return act, logits

    def loss(self, params, batch) -> float:
        p = self._check_params(params)
        self._check_batch(batch, self.d_in)
        _, logits = self._forward(p, batch)
        logp = _log_softmax(logits)
        return float(-logp[np.arange(len(batch)), batch.labels].mean())

    def grad(self, params, batch) -> np.ndarray:
        p = self._check_params(params)
        self._check_batch(batch, self.d_in)
        w1, b1, w2, b2 = self._unpack(p)
        act, logits = self._forward(p, batch)
        dlogits = np.exp(_log_softmax(logits))
        dlogits[np.arange(len(batch)), batch.labels] -= 1.0
        dlogits /= len(batch)
        gw2 = dlogits.T @ act
        gb2 = dlogits.sum(axis=0)
        dact = dlogits @ w2
        dpre = dact * (1.0 - act**2)
        gw1 = dpre.T @ batch.features
        gb1 = dpre.sum(axis=0)
        return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])

    def predict_proba(self, params: np.ndarray, features: np.ndarray) -> np.ndarray:
        p = self._check_params(params)
        batch = Batch.from_arrays(features, np.zeros(features.shape[0], dtype=np.int64))
        _, logits = self._forward(p, batch)
        return np.exp(_log_softmax(logits))

    def init_params(self, rng) -> np.ndarray:
        h, d, c = self.hidden, self.d_in, self.n_classes
        w1 = rng.normal(scale=1.0 / np.sqrt(d), size=h * d)
        w2 = rng.normal(scale=1.0 / np.sqrt(h), size=c * h)
        return np.concatenate([w1, np.zeros(h), w2, np.zeros(c)])
