"""Sharpness-aware gradients, quasi-global momentum, and LR schedules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SaddleError
from .models import Batch, GradOracle

__all__ = [
    "sam_perturbation",
    "sam_gradient",
    "perturbed_gradient",
    "MomentumState",
    "qgm_momentum_update",
    "LrSchedule",
    "parse_lr_schedule",
]


def sam_perturbation(grad: np.ndarray, rho: float) -> np.ndarray:
    """Ascent step xi = rho * g / ||g||; zero when the gradient vanishes."""
    if rho < 0:
        raise SaddleError(f"rho must be >= 0, got {rho}")
    norm = float(np.linalg.norm(grad))
    if rho == 0.0 or norm == 0.0:
        return np.zeros_like(grad)
    return (rho / norm) * grad


def perturbed_gradient(
    oracle: GradOracle,
    params: np.ndarray,
    batch: Batch,
    grad: np.ndarray,
    rho: float,
) -> np.ndarray:
    """Gradient at the SAM-perturbed point, reusing an already computed grad.

    rho = 0 (or a vanishing gradient) returns `grad` itself, bit for bit, so
    sharpness-aware variants reduce exactly to their base algorithms.
    """
    if rho == 0.0:
        return grad
    xi = sam_perturbation(grad, rho)
    if not xi.any():
        return grad
    return oracle.grad(params + xi, batch)


def sam_gradient(
    oracle: GradOracle, params: np.ndarray, batch: Batch, rho: float
) -> np.ndarray:
    """Sharpness-aware gradient on one minibatch (both passes share the batch)."""
    grad = oracle.grad(params, batch)
    return perturbed_gradient(oracle, params, batch, grad, rho)


@dataclass
class MomentumState:
    """Quasi-global momentum: a slow buffer tracking the gossip displacement.

    `step_direction` forms the in-step momentum used for the descent step;
    `absorb_displacement` folds the realized round displacement back into the
    buffer as a pseudo-gradient.
    """

    beta: float
    mu: float
    buffer: np.ndarray = field(default=None)  # type: ignore[assignment]

    def init_zero(self, dim: int) -> "MomentumState":
        self.buffer = np.zeros(dim)
        return self

    def step_direction(self, g_tilde: np.ndarray) -> np.ndarray:
        return self.beta * self.buffer + g_tilde

    def absorb_displacement(
        self, x_before: np.ndarray, x_after: np.ndarray, eta: float
    ) -> None:
        if eta <= 0:
            raise SaddleError(f"eta must be > 0, got {eta}")
        pseudo = (x_before - x_after) / eta
        self.buffer = self.mu * self.buffer + (1.0 - self.mu) * pseudo

    def local_update(self, g_tilde: np.ndarray) -> np.ndarray:
        """Heavy-ball buffer update m <- beta*m + g; returns the new buffer."""
        self.buffer = self.beta * self.buffer + g_tilde
        return self.buffer


def qgm_momentum_update(
    state: MomentumState,
    g_tilde: np.ndarray,
    x_before: np.ndarray,
    x_after: np.ndarray,
    eta: float,
) -> tuple[np.ndarray, MomentumState]:
    """One-shot form of the two-phase update (descent direction, new state)."""
    m = state.step_direction(g_tilde)
    state.absorb_displacement(x_before, x_after, eta)
    return m, state


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: multiply by `factor` once each fraction of rounds passes."""

    fractions: tuple[float, ...]
    factor: float

    def at(self, round_index: int, total_rounds: int, eta0: float) -> float:
        """Learning rate for 0-based `round_index` out of `total_rounds`."""
        if total_rounds <= 0:
            return eta0
        decays = sum(
            1 for f in self.fractions if round_index >= int(np.floor(f * total_rounds))
        )
        return eta0 * self.factor**decays


def parse_lr_schedule(text: str) -> LrSchedule:
    """Parse "step:<fractions>:<factor>", e.g. "step:0.5,0.75:0.1"."""
    parts = text.split(":")
    if len(parts) != 3 or parts[0] != "step":
        raise SaddleError(
            f"lr_schedule must look like step:<fractions>:<factor>, got {text!r}"
        )
    try:
        fractions = tuple(float(f) for f in parts[1].split(",") if f != "")
        factor = float(parts[2])
    except ValueError as exc:
        raise SaddleError(f"bad lr_schedule {text!r}: {exc}") from None
    if not fractions:
        raise SaddleError(f"lr_schedule {text!r} has no decay points")
    if any(not 0.0 < f < 1.0 for f in fractions):
        raise SaddleError("decay fractions must lie strictly inside (0, 1)")
    if list(fractions) != sorted(fractions):
        raise SaddleError("decay fractions must be increasing")
    if factor <= 0:
        raise SaddleError(f"decay factor must be > 0, got {factor}")
    return LrSchedule(fractions=fractions, factor=factor)
