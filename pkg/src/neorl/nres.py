"""Square place-cell tilings of the unit arena.

Each layer splits ``[0, 1] x [0, 1]`` into ``N x N`` equal square receptive
fields.  A position activates exactly one cell per layer.  Cells are indexed
``(ix, iy)`` with ``ix`` along x, ``iy`` along y and the origin in the lower
left corner.  Internally a cell is also addressed by its flat index
``iy * N + ix``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class LayerSpec:
    resolution: int
    layer_index: int = 0

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise DomainError(f"resolution must be a positive integer, got {self.resolution!r}")

    @property
    def n_cells(self) -> int:
        return self.resolution * self.resolution


class CellId(NamedTuple):
    layer_index: int
    ix: int
    iy: int

    def flat(self, resolution: int) -> int:
        return self.iy * resolution + self.ix


@dataclass(frozen=True)
class NresStack:
    """Ordered collection of tilings with pairwise distinct resolutions."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise DomainError("a stack needs at least one layer")
        resolutions = [layer.resolution for layer in self.layers]
        if len(set(resolutions)) != len(resolutions):
            raise DomainError(f"layer resolutions must be distinct, got {resolutions}")
        for k, layer in enumerate(self.layers):
            if layer.layer_index != k:
                raise DomainError(f"layer {k} carries layer_index {layer.layer_index}")

    @classmethod
    def from_resolutions(cls, resolutions: Sequence[int]) -> "NresStack":
        return cls(tuple(LayerSpec(int(n), k) for k, n in enumerate(resolutions)))

    @property
    def resolutions(self) -> tuple[int, ...]:
        return tuple(layer.resolution for layer in self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)


def _check_position(x: float, y: float) -> None:
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"position ({x}, {y}) lies outside the unit arena")


def _axis_index(u: float, n: int) -> int:
    i = int(u * n)
    return n - 1 if i >= n else i


def locate(position, layer: LayerSpec) -> CellId:
    """Return the cell of ``layer`` whose receptive field contains ``position``.

    A coordinate of exactly 1.0 falls into the last cell along that axis.
    """
    x, y = float(position[0]), float(position[1])
    _check_position(x, y)
    n = layer.resolution
    return CellId(layer.layer_index, _axis_index(x, n), _axis_index(y, n))


def activation_vector(position, stack: NresStack) -> list[CellId]:
    """One active cell per layer of ``stack``, in layer order."""
    return [locate(position, layer) for layer in stack.layers]


def cell_count(stack: NresStack) -> int:
    return sum(layer.n_cells for layer in stack.layers)


def flat_index(x: float, y: float, n: int) -> int:
    """Flat cell index of a single (already validated) position."""
    return _axis_index(y, n) * n + _axis_index(x, n)


def flat_indices(points: np.ndarray, n: int) -> np.ndarray:
    """Vectorised flat cell indices for an ``(M, 2)`` array of positions."""
    ij = np.minimum((points * n).astype(np.intp), n - 1)
    return ij[:, 1] * n + ij[:, 0]


def cell_from_flat(flat: int, layer: LayerSpec) -> CellId:
    iy, ix = divmod(int(flat), layer.resolution)
    return CellId(layer.layer_index, ix, iy)
