"""Gossip topologies and their doubly stochastic mixing matrices.

Every builder returns a symmetric, doubly stochastic matrix with a positive
self-weight on each agent and zeros between non-adjacent agents. Convergence
speed of repeated gossip is summarized by the spectral gap
``1 - sigma_2(W)**2`` where ``sigma_2`` is the second-largest singular value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidTopologyError

__all__ = [
    "MixingMatrix",
    "build_ring",
    "build_torus",
    "build_complete",
    "spectral_gap",
]

# Double stochasticity is enforced to this absolute tolerance.
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class MixingMatrix:
    """A gossip topology together with its mixing weights.

    Attributes:
        kind: one of "ring", "torus", "complete".
        weights: (n, n) symmetric doubly stochastic array.
        spectral_gap: 1 - sigma_2(W)^2; zero means gossip never contracts.
    """

    kind: str
    weights: np.ndarray
    spectral_gap: float = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        _check_doubly_stochastic(w)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "spectral_gap", spectral_gap(w))

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    def neighbors(self, i: int) -> list[int]:
        """Agents j != i with a nonzero edge weight to i."""
        row = self.weights[i]
        return [j for j in range(self.n_agents) if j != i and row[j] != 0.0]

    @property
    def is_connected(self) -> bool:
        return self.spectral_gap > 0.0


def _check_doubly_stochastic(w: np.ndarray) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidTopologyError(f"mixing matrix must be square, got shape {w.shape}")
    if not np.array_equal(w, w.T):
        raise InvalidTopologyError("mixing matrix must be symmetric")
    if np.any(w < 0.0):
        raise InvalidTopologyError("mixing weights must be non-negative")
    if np.any(np.diag(w) <= 0.0):
        raise InvalidTopologyError("every agent needs a positive self-weight")
    ones = np.ones(w.shape[0])
    if np.max(np.abs(w @ ones - ones)) > STOCHASTIC_TOL:
        raise InvalidTopologyError(f"rows must sum to 1 within {STOCHASTIC_TOL}")


def spectral_gap(weights: np.ndarray) -> float:
    """Return ``1 - sigma_2(W)**2`` for a symmetric doubly stochastic W.

    A disconnected topology has a second singular value of 1; the gap is
    reported as exactly 0.0 and a warning flags that gossip cannot reach
    consensus on it.
    """
    w = np.asarray(weights, dtype=float)
    # Symmetric: singular values are the absolute eigenvalues.
    eigvals = np.linalg.eigvalsh(w)
    sigma = np.sort(np.abs(eigvals))[::-1]
    sigma2 = float(sigma[1]) if sigma.size > 1 else 0.0
    if sigma2 >= 1.0 - STOCHASTIC_TOL:
        warnings.warn(
            "second singular value is 1: topology is disconnected or bipartite-"
            "degenerate and gossip will not converge",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return 1.0 - sigma2**2


def build_ring(n: int) -> MixingMatrix:
    """Ring of n agents, each mixing uniformly with itself and 2 cyclic neighbors.

    For n == 2 the two "neighbors" coincide and the matrix degenerates to the
    pairwise average [[1/2, 1/2], [1/2, 1/2]].
    """
    if n < 2:
        raise InvalidTopologyError(f"ring needs at least 2 agents, got {n}")
    w = np.zeros((n, n))
    if n == 2:
        w[:] = 0.5
    else:
        third = 1.0 / 3.0
        for i in range(n):
            w[i, i] = third
            w[i, (i - 1) % n] += third
            w[i, (i + 1) % n] += third
    return MixingMatrix(kind="ring", weights=w)


def build_torus(rows: int, cols: int) -> MixingMatrix:
    """2-D torus grid; each agent mixes uniformly with itself and 4 wraparound
    neighbors (weight 1/5 each). Requires rows >= 3 and cols >= 3 so the four
    neighbors are distinct."""
    if rows < 3 or cols < 3:
        raise InvalidTopologyError(
            f"torus needs rows >= 3 and cols >= 3, got {rows}x{cols}"
        )
    n = rows * cols
    w = np.zeros((n, n))
    fifth = 1.0 / 5.0
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            w[i, i] = fifth
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                j = ((r + dr) % rows) * cols + (c + dc) % cols
                w[i, j] += fifth
    return MixingMatrix(kind="torus", weights=w)


def build_complete(n: int) -> MixingMatrix:
    """All-to-all averaging, w_ij = 1/n. Spectral gap is exactly 1."""
    if n < 1:
        raise InvalidTopologyError(f"complete graph needs at least 1 agent, got {n}")
    w = np.full((n, n), 1.0 / n)
    return MixingMatrix(kind="complete", weights=w)
