"""Flat parameter vectors with a named block layout.

All engines and compression operators work on flat float64 vectors; the layout
records (name, offset, length) per block so layer-wise operators can slice
without knowing model internals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import SaddleError

__all__ = ["Block", "ParamVector", "single_block", "check_layout", "block_slices"]


class Block(NamedTuple):
    name: str
    offset: int
    length: int


def single_block(length: int, name: str = "x") -> tuple[Block, ...]:
    return (Block(name, 0, length),)


def check_layout(layout: tuple[Block, ...], dim: int) -> None:
    """Blocks must tile [0, dim) contiguously in order."""
    expect = 0
    for b in layout:
        if b.offset != expect or b.length < 1:
            raise SaddleError(f"layout block {b} does not tile the vector")
        expect += b.length
    if expect != dim:
        raise SaddleError(f"layout covers {expect} of {dim} coordinates")


def block_slices(layout: tuple[Block, ...]):
    for b in layout:
        yield b, slice(b.offset, b.offset + b.length)


@dataclass(frozen=True)
class ParamVector:
    """A flat vector plus its block layout."""

    values: np.ndarray
    layout: tuple[Block, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        check_layout(self.layout, v.shape[0])
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def block(self, name: str) -> np.ndarray:
        for b in self.layout:
            if b.name == name:
                return self.values[b.offset : b.offset + b.length]
        raise KeyError(name)
