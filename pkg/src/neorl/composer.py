"""Behaviour synthesis: weighted superposition of learner values.

Elements of interest (EoI) mark the cells they occupy as rewarded, with the
element's signed weight.  The agent's Q-field at its current cells is the sum,
over layers and rewarded cells, of ``layer_coef * weight * Q_cell(s, a)``.
With ``inverse_area`` weighting the layer coefficient is ``N**2``, the inverse
of the receptive-field area in arena units, so finer layers speak louder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from neorl.nres import CellId, DomainError, NresStack, cell_from_flat, locate
from neorl.ovf import N_ACTIONS, Action, OvfBank

WEIGHTING_MODES = ("inverse_area", "uniform")


@dataclass(frozen=True)
class ElementOfInterest:
    position: tuple[float, float]
    weight: float


# one {cell: aggregated weight} mapping per layer
RewardedCellSet = list


def rewarded_cells(eois: Sequence[ElementOfInterest], stack: NresStack) -> RewardedCellSet:
    """Cells occupied by at least one EoI, with summed weights, per layer.

    Cells whose weights cancel to exactly zero are dropped.
    """
    out = []
    for layer in stack.layers:
        cells: dict[CellId, float] = {}
        for eoi in eois:
            cell = locate(eoi.position, layer)
            cells[cell] = cells.get(cell, 0.0) + eoi.weight
        out.append({c: w for c, w in cells.items() if w != 0.0})
    return out


def rewarded_flat(points: np.ndarray, weights: np.ndarray, resolutions: Sequence[int]):
    """Array version of :func:`rewarded_cells`.

    Returns one ``(cells, weights)`` pair per layer with cells as flat indices,
    in order of first occupation.
    """
    res = np.asarray(resolutions, dtype=np.intp)[:, None, None]
    ij = np.minimum((points[None] * res).astype(np.intp), res - 1)
    flat = (ij[..., 1] * res[:, :, 0] + ij[..., 0]).tolist()
    w = weights.tolist()
    out = []
    for row in flat:
        agg: dict[int, float] = {}
        for c, wi in zip(row, w):
            agg[c] = agg.get(c, 0.0) + wi
        cells = [c for c, v in agg.items() if v != 0.0]
        out.append((cells, [agg[c] for c in cells]))
    return out


def layer_coefficients(stack: NresStack, weighting: str = "inverse_area") -> np.ndarray:
    if weighting == "inverse_area":
        return np.array([float(n * n) for n in stack.resolutions])
    if weighting == "uniform":
        return np.ones(len(stack))
    raise ValueError(f"unknown layer weighting {weighting!r}; expected one of {WEIGHTING_MODES}")


def q_field_flat(bank: OvfBank, agent: Sequence[int], rewarded, coefs: np.ndarray) -> np.ndarray:
    """:func:`q_field` on flat indices as produced by :func:`rewarded_flat`."""
    field = np.zeros(N_ACTIONS)
    q_init = bank.params.q_init
    for k, (cells, weights) in enumerate(rewarded):
        if len(cells) == 0:
            continue
        row = bank.state_row(k, agent[k])
        if row is None:
            if q_init == 0.0:
                continue
            contrib = np.full(N_ACTIONS, q_init * sum(weights))
        else:
            contrib = row[:, cells] @ np.asarray(weights, dtype=np.float64)
        field += coefs[k] * contrib
    return field


def q_field(bank: OvfBank, agent_cells: Sequence[CellId], rewarded: RewardedCellSet,
            weighting: str = "inverse_area") -> np.ndarray:
    """Composite action values at the agent's cells, indexed by :class:`Action`."""
    stack = bank.stack
    if len(agent_cells) != len(stack) or len(rewarded) != len(stack):
        raise DomainError("agent cells / rewarded set do not match the bank's stack")
    agent, flat_rewarded = [], []
    for k, layer in enumerate(stack.layers):
        n = layer.resolution
        if agent_cells[k].layer_index != k:
            raise DomainError(f"agent cell {agent_cells[k]} is not in layer {k}")
        agent.append(agent_cells[k].flat(n))
        cells = sorted(rewarded[k])
        for c in cells:
            if c.layer_index != k or not (0 <= c.ix < n and 0 <= c.iy < n):
                raise DomainError(f"rewarded cell {c} is not a cell of layer {k} (N{n})")
        flat_rewarded.append(([c.flat(n) for c in cells], [rewarded[k][c] for c in cells]))
    return q_field_flat(bank, agent, flat_rewarded, layer_coefficients(stack, weighting))


def select_action(field: np.ndarray, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy choice; exact ties are broken uniformly at random."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    best = np.flatnonzero(field == field.max())
    if len(best) == 1:
        return Action(int(best[0]))
    return Action(int(best[rng.integers(len(best))]))


def cells_of(rewarded_flat_layer, layer) -> dict[CellId, float]:
    cells, weights = rewarded_flat_layer
    return {cell_from_flat(c, layer): float(w) for c, w in zip(cells, weights)}
