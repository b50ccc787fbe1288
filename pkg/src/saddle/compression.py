"""Lossy payload compression operators with per-block (layer-wise) application.

All operators satisfy the contraction contract
``E_Q ||Q(v) - v||^2 <= (1 - delta) ||v||^2`` for their declared or
empirically estimated delta. Bit costs follow the 32-bit-per-float accounting
used for communication reporting; every per-block scale is charged 32 bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import IndexWidthError, SaddleError
from .params import Block, block_slices, single_block

__all__ = [
    "CompressionOp",
    "CompressedMessage",
    "ErrorFeedbackState",
    "identity_op",
    "stochastic_quant",
    "top_k",
    "sign_scaled",
    "compress",
    "bit_cost",
    "apply_error_feedback",
    "contraction_delta",
]

MAX_TOPK_BLOCK = 1 << 16  # top-k indices are encoded in 16 bits
# grid positions this close to an integer count as exact fixed points
_GRID_SNAP = 1e-9


@dataclass(frozen=True)
class CompressionOp:
    """Operator descriptor; `delta` is the declared contraction constant
    (None when only an empirical estimate is available)."""

    kind: str                     # identity | stochastic_quant | top_k | sign_scaled
    bits: int | None = None      # stochastic_quant only
    fraction: float | None = None  # top_k only
    delta: float | None = None

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def label(self) -> str:
        if self.kind == "stochastic_quant":
            return f"quant:{self.bits}"
        if self.kind == "top_k":
            return f"topk:{self.fraction}"
        if self.kind == "sign_scaled":
            return "sign"
        return "none"


def identity_op() -> CompressionOp:
    return CompressionOp(kind="identity", delta=1.0)


def stochastic_quant(bits: int) -> CompressionOp:
    if not 1 <= bits <= 32:
        raise SaddleError(f"quantization bits must be in [1, 32], got {bits}")
    return CompressionOp(kind="stochastic_quant", bits=int(bits), delta=None)


def top_k(fraction: float) -> CompressionOp:
    if not 0.0 < fraction <= 1.0:
        raise SaddleError(f"top-k fraction must be in (0, 1], got {fraction}")
    # ceil(f * len) / len >= f for every block, so f is a valid declared bound
    return CompressionOp(kind="top_k", fraction=float(fraction), delta=float(fraction))


def sign_scaled() -> CompressionOp:
    return CompressionOp(kind="sign_scaled", delta=None)


@dataclass(frozen=True)
class CompressedMessage:
    """Encoded payload; decode() reproduces Q(v) exactly."""

    op: CompressionOp
    blocks: tuple[Block, ...]
    payload: tuple[Any, ...]   # one entry per block, operator-specific
    bit_cost: int
    dim: int

    def decode(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for (block, sl), data in zip(block_slices(self.blocks), self.payload):
            out[sl] = _decode_block(self.op, block.length, data)
        return out


def _kept_count(fraction: float, length: int) -> int:
    return min(length, math.ceil(fraction * length))


def bit_cost(op: CompressionOp, blocks: tuple[Block, ...]) -> int:
    """Modeled wire cost in bits for one payload with this layout."""
    total = 0
    for b in blocks:
        if op.kind == "identity":
            total += 32 * b.length
        elif op.kind == "stochastic_quant":
            total += op.bits * b.length + 32
        elif op.kind == "top_k":
            if b.length > MAX_TOPK_BLOCK:
                raise IndexWidthError(
                    f"block {b.name!r} has {b.length} > {MAX_TOPK_BLOCK} entries;"
                    " 16-bit indices cannot address it"
                )
            total += _kept_count(op.fraction, b.length) * (32 + 16)
        elif op.kind == "sign_scaled":
            total += b.length + 32
        else:
            raise SaddleError(f"unknown compression kind {op.kind!r}")
    return total


def _grid_positions(v: np.ndarray, scale: float, levels: int):
    """Map values in [-scale, scale] to (lower level index, fractional excess)."""
    t = (v + scale) / (2.0 * scale) * (levels - 1)
    nearest = np.rint(t)
    snap = np.abs(t - nearest) <= _GRID_SNAP * np.maximum(1.0, np.abs(t))
    t = np.where(snap, nearest, t)
    low = np.floor(t)
    frac = t - low
    low = np.clip(low, 0, levels - 1).astype(np.int64)
    return low, frac


def _encode_block(op, values, rng):
    if op.kind == "identity":
        return values.copy()
    if op.kind == "stochastic_quant":
        scale = float(np.max(np.abs(values))) if values.size else 0.0
        levels = (1 << op.bits) - 1
        if scale == 0.0 or levels < 2:
            return scale, np.zeros(values.shape, dtype=np.uint32), levels
        low, frac = _grid_positions(values, scale, levels)
        up = rng.random(values.shape) < frac
        idx = np.minimum(low + up, levels - 1).astype(np.uint32)
        return scale, idx, levels
    if op.kind == "top_k":
        if values.shape[0] > MAX_TOPK_BLOCK:
            raise IndexWidthError(
                f"block of {values.shape[0]} entries exceeds 16-bit index range"
            )
        k = _kept_count(op.fraction, values.shape[0])
        order = np.argsort(-np.abs(values), kind="stable")[:k]
        order = np.sort(order)
        return order.astype(np.uint16), values[order].copy()
    if op.kind == "sign_scaled":
        scale = float(np.abs(values).mean()) if values.size else 0.0
        nonneg = values >= 0.0  # sign(0) counts as +1
        return nonneg, scale
    raise SaddleError(f"unknown compression kind {op.kind!r}")


def _decode_block(op, length, data):
    if op.kind == "identity":
        return data
    if op.kind == "stochastic_quant":
        scale, idx, levels = data
        if scale == 0.0 or levels < 2:
            return np.zeros(length)
        return scale * (2.0 * idx.astype(float) / (levels - 1) - 1.0)
    if op.kind == "top_k":
        idx, vals = data
        out = np.zeros(length)
        out[idx.astype(np.int64)] = vals
        return out
    if op.kind == "sign_scaled":
        nonneg, scale = data
        return np.where(nonneg, scale, -scale)
    raise SaddleError(f"unknown compression kind {op.kind!r}")


def compress(
    op: CompressionOp,
    values: np.ndarray,
    blocks: tuple[Block, ...] | None = None,
    rng: np.random.Generator | None = None,
) -> CompressedMessage:
    """Apply the operator block-wise and package the result with its bit cost."""
    v = np.asarray(values, dtype=float).ravel()
    if blocks is None:
        blocks = single_block(v.shape[0])
    if sum(b.length for b in blocks) != v.shape[0]:
        raise SaddleError("block layout does not cover the payload")
    if op.kind == "stochastic_quant" and rng is None:
        raise SaddleError("stochastic quantization needs an rng")
    payload = tuple(
        _encode_block(op, v[sl], rng) for _, sl in block_slices(blocks)
    )
    return CompressedMessage(
        op=op,
        blocks=tuple(blocks),
        payload=payload,
        bit_cost=bit_cost(op, tuple(blocks)),
        dim=v.shape[0],
    )


@dataclass(frozen=True)
class ErrorFeedbackState:
    """Residual memory for one compressed channel."""

    residual: np.ndarray

    @staticmethod
    def zeros(dim: int) -> "ErrorFeedbackState":
        return ErrorFeedbackState(residual=np.zeros(dim))


def apply_error_feedback(
    payload: np.ndarray,
    state: ErrorFeedbackState,
    op: CompressionOp,
    blocks: tuple[Block, ...] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[CompressedMessage, ErrorFeedbackState]:
    """Compress payload + residual; the new residual is what the message lost."""
    target = np.asarray(payload, dtype=float) + state.residual
    msg = compress(op, target, blocks, rng)
    return msg, ErrorFeedbackState(residual=target - msg.decode())


def _expected_quant_sq_error(op, values, blocks):
    # stochastic rounding: E[(Q(x) - x)^2] = frac * (1 - frac) * step^2 per coord
    total = 0.0
    levels = (1 << op.bits) - 1
    for _, sl in block_slices(blocks):
        v = values[sl]
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        if scale == 0.0:
            continue
        if levels < 2:
            total += float(v @ v)
            continue
        step = 2.0 * scale / (levels - 1)
        _, frac = _grid_positions(v, scale, levels)
        total += float(np.sum(frac * (1.0 - frac))) * step * step
    return total


def contraction_delta(
    op: CompressionOp,
    trials: int,
    dim: int,
    rng: np.random.Generator,
    blocks: tuple[Block, ...] | None = None,
) -> float:
    """Empirical contraction constant: 1 - max_v E_Q ||Q(v) - v||^2 / ||v||^2.

    top_k returns its exact worst case over all inputs instead of sampling;
    stochastic quantization uses the closed-form conditional expectation so no
    inner Monte Carlo is needed.
    """
    if blocks is None:
        blocks = single_block(dim)
    if op.kind == "identity":
        return 1.0
    if op.kind == "top_k":
        return min(
            _kept_count(op.fraction, b.length) / b.length for b in blocks
        )
    worst = 0.0
    for _ in range(trials):
        v = rng.normal(size=dim)
        sq = float(v @ v)
        if op.kind == "stochastic_quant":
            err = _expected_quant_sq_error(op, v, blocks)
        else:
            dec = compress(op, v, blocks, rng).decode()
            err = float(np.sum((dec - v) ** 2))
        worst = max(worst, err / sq)
    return 1.0 - worst
