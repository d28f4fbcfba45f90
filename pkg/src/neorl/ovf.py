"""Bank of per-cell Q-learners (orthogonal value functions).

Every receptive field of every layer owns one learner.  A learner is rewarded
with 1 when the agent enters its cell and with 0 otherwise; entering the cell
ends that learner's pseudo-episode, so its values are a discounted proximity
in ``[0, 1]``.  All learners of a layer are updated off-policy from the one
transition the agent actually experienced.

Storage
-------
Layer ``k`` with ``K = N_k**2`` cells keeps one dense array of shape
``(K, 4, K)`` indexed ``[state, action, learner]``.  The array is obtained from
``np.zeros`` so the operating system only backs the pages of rows that are
written; a per-state ``touched`` mask records which rows hold real data.
Rows never touched read as ``q_init``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from neorl.nres import CellId, DomainError, NresStack


class Action(IntEnum):
    NORTH = 0
    SOUTH = 1
    EAST = 2
    WEST = 3


N_ACTIONS = len(Action)


class SnapshotFormatError(ValueError):
    """Raised for malformed, truncated or version-mismatched snapshots."""


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = 0.1
    gamma: float = 0.9
    q_init: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma}")


class OvfBank:
    """All learners of an :class:`NresStack` plus their shared parameters."""

    def __init__(self, stack: NresStack, params: LearnerParams | None = None):
        self.stack = stack
        self.params = params if params is not None else LearnerParams()
        self._q = []
        self._touched = []
        for layer in stack.layers:
            k = layer.n_cells
            self._q.append(np.zeros((k, N_ACTIONS, k), dtype=np.float64))
            self._touched.append(np.zeros(k, dtype=bool))

    @property
    def n_learners(self) -> int:
        return sum(layer.n_cells for layer in self.stack.layers)

    def learners(self):
        for layer in self.stack.layers:
            for iy in range(layer.resolution):
                for ix in range(layer.resolution):
                    yield CellId(layer.layer_index, ix, iy)

    # -- lookups ---------------------------------------------------------

    def _layer_of(self, *cells: CellId) -> int:
        k = cells[0].layer_index
        if not 0 <= k < len(self.stack):
            raise DomainError(f"{cells[0]} does not belong to this bank's stack")
        n = self.stack.layers[k].resolution
        for cell in cells:
            if cell.layer_index != k:
                raise DomainError(f"cells {cells} span different layers")
            if not (0 <= cell.ix < n and 0 <= cell.iy < n):
                raise DomainError(f"{cell} lies outside an N{n} layer")
        return k

    def state_row(self, layer: int, state: int) -> np.ndarray | None:
        """``(4, K)`` view of Q[state, :, :] for one layer, or None if untouched."""
        if self._touched[layer][state]:
            return self._q[layer][state]
        return None

    def q_values(self, learner: CellId, state: CellId) -> np.ndarray:
        """Q values of ``learner`` at ``state`` for the four actions."""
        k = self._layer_of(learner, state)
        n = self.stack.layers[k].resolution
        s = state.flat(n)
        if not self._touched[k][s]:
            return np.full(N_ACTIONS, self.params.q_init)
        return self._q[k][s, :, learner.flat(n)].copy()

    def table(self, learner: CellId) -> np.ndarray:
        """Dense ``(K, 4)`` copy of one learner's Q-table (state-major, flat states)."""
        k = self._layer_of(learner)
        n = self.stack.layers[k].resolution
        out = self._q[k][:, :, learner.flat(n)].copy()
        out[~self._touched[k]] = self.params.q_init
        return out

    def touched_states(self, layer: int) -> np.ndarray:
        return np.flatnonzero(self._touched[layer])

    # -- learning --------------------------------------------------------

    def _materialize(self, layer: int, state: int) -> np.ndarray:
        rows = self._q[layer]
        if not self._touched[layer][state]:
            if self.params.q_init != 0.0:
                rows[state] = self.params.q_init
            self._touched[layer][state] = True
        return rows[state]

    def update_flat(self, prev: Sequence[int], action: int, nxt: Sequence[int]) -> None:
        """:meth:`step_update` on flat per-layer state indices (no validation)."""
        alpha = self.params.alpha
        gamma = self.params.gamma
        for k in range(len(self._q)):
            s, s_next = prev[k], nxt[k]
            if self._touched[k][s_next]:
                target = self._q[k][s_next].max(axis=0)
                target *= gamma
            else:
                target = np.full(self._q[k].shape[2], gamma * self.params.q_init)
            # the learner owning s_next is absorbed: reward 1, no bootstrap
            target[s_next] = 1.0
            row = self._materialize(k, s)[action]
            target -= row
            target *= alpha
            row += target

    def step_update(self, prev_cells: Sequence[CellId], action, next_cells: Sequence[CellId]) -> "OvfBank":
        """Apply one observed transition to every learner of every layer.

        For learner ``g`` the reward is 1 if ``next_cells`` activates ``g``
        (absorbing, no bootstrap) and 0 otherwise (bootstrap on
        ``gamma * max_a Q_g(s', a)``).
        """
        if len(prev_cells) != len(self.stack) or len(next_cells) != len(self.stack):
            raise DomainError("activation vectors do not match the bank's stack")
        prev, nxt = [], []
        for k, layer in enumerate(self.stack.layers):
            self._layer_of(prev_cells[k], next_cells[k])
            if prev_cells[k].layer_index != k:
                raise DomainError(f"activation vector entry {k} belongs to layer {prev_cells[k].layer_index}")
            prev.append(prev_cells[k].flat(layer.resolution))
            nxt.append(next_cells[k].flat(layer.resolution))
        self.update_flat(prev, int(Action(action)), nxt)
        return self

    def max_q(self, learner: CellId, state: CellId) -> float:
        return float(self.q_values(learner, state).max())

    # -- comparison ------------------------------------------------------

    def equals(self, other: "OvfBank") -> bool:
        """Bit-exact equality of stack, parameters and every readable Q value."""
        if self.stack.resolutions != other.stack.resolutions or self.params != other.params:
            return False
        for k in range(len(self._q)):
            if not np.array_equal(self._touched[k], other._touched[k]):
                return False
            rows = self._touched[k]
            a = self._q[k][rows]
            b = other._q[k][rows]
            if not np.array_equal(a.view(np.uint64), b.view(np.uint64)):
                return False
        return True


def new_bank(stack: NresStack, params: LearnerParams | None = None) -> OvfBank:
    return OvfBank(stack, params)


def max_q(bank: OvfBank, learner: CellId, state: CellId) -> float:
    return bank.max_q(learner, state)


def step_update(bank: OvfBank, prev_cells, action, next_cells) -> OvfBank:
    return bank.step_update(prev_cells, action, next_cells)


# -- snapshots -----------------------------------------------------------
#
# Little-endian layout:
#   header  : b"OVFB" | u16 version | u16 n_layers | n_layers * u32 resolution
#             | f64 alpha | f64 gamma | f64 q_init
#   tables  : for each layer, for each learner (flat order):
#             u32 n_triples | n_triples * (u32 state, u8 action, f64 value)
#   trailer : b"END!"
# Triples cover the materialised states of the learner's layer.

MAGIC = b"OVFB"
TRAILER = b"END!"
FORMAT_VERSION = 1

_TRIPLE = np.dtype([("state", "<u4"), ("action", "u1"), ("value", "<f8")])


def snapshot(bank: OvfBank) -> bytes:
    buf = io.BytesIO()
    res = bank.stack.resolutions
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", FORMAT_VERSION, len(res)))
    buf.write(struct.pack(f"<{len(res)}I", *res))
    p = bank.params
    buf.write(struct.pack("<ddd", p.alpha, p.gamma, p.q_init))
    for k, n in enumerate(res):
        states = bank.touched_states(k)
        m = len(states) * N_ACTIONS
        table = np.dtype([("count", "<u4"), ("triples", _TRIPLE, (m,))])
        out = np.zeros(n * n, dtype=table)
        out["count"] = m
        trip = out["triples"]
        trip["state"] = np.repeat(states, N_ACTIONS)[None, :]
        trip["action"] = np.tile(np.arange(N_ACTIONS), len(states))[None, :]
        # (states, 4, K) -> (K, states * 4)
        trip["value"] = bank._q[k][states].reshape(m, n * n).T
        buf.write(out.tobytes())
    buf.write(TRAILER)
    return buf.getvalue()


def _take(data: memoryview, pos: int, size: int) -> tuple[memoryview, int]:
    if pos + size > len(data):
        raise SnapshotFormatError(f"snapshot truncated at byte {pos} (needed {size} more)")
    return data[pos:pos + size], pos + size


def restore(data: bytes) -> OvfBank:
    view = memoryview(data)
    head, pos = _take(view, 0, 8)
    if bytes(head[:4]) != MAGIC:
        raise SnapshotFormatError("not an OVF bank snapshot (bad magic)")
    version, n_layers = struct.unpack("<HH", head[4:])
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    if n_layers == 0:
        raise SnapshotFormatError("snapshot declares zero layers")
    raw, pos = _take(view, pos, 4 * n_layers)
    res = struct.unpack(f"<{n_layers}I", raw)
    raw, pos = _take(view, pos, 24)
    alpha, gamma, q_init = struct.unpack("<ddd", raw)
    try:
        bank = OvfBank(NresStack.from_resolutions(res), LearnerParams(alpha, gamma, q_init))
    except DomainError as exc:
        raise SnapshotFormatError(f"invalid snapshot header: {exc}") from exc

    for k, n in enumerate(res):
        kk = n * n
        raw, _ = _take(view, pos, 4)
        (m,) = struct.unpack("<I", raw)
        if m % N_ACTIONS:
            raise SnapshotFormatError(f"layer {k}: triple count {m} is not a multiple of {N_ACTIONS}")
        table = np.dtype([("count", "<u4"), ("triples", _TRIPLE, (m,))])
        raw, pos = _take(view, pos, table.itemsize * kk)
        tables = np.frombuffer(raw, dtype=table)
        if np.any(tables["count"] != m):
            raise SnapshotFormatError(f"layer {k}: learners disagree on materialised states")
        trip = tables["triples"]
        states = trip["state"][0, ::N_ACTIONS].astype(np.intp)
        expected_actions = np.tile(np.arange(N_ACTIONS), len(states))
        if (np.any(trip["state"] != np.repeat(states, N_ACTIONS)[None, :])
                or np.any(trip["action"] != expected_actions[None, :])
                or np.any(states >= kk)):
            raise SnapshotFormatError(f"layer {k}: malformed state/action triples")
        bank._q[k][states] = trip["value"].T.reshape(len(states), N_ACTIONS, kk)
        bank._touched[k][states] = True

    raw, pos = _take(view, pos, len(TRAILER))
    if bytes(raw) != TRAILER or pos != len(view):
        raise SnapshotFormatError("snapshot trailer missing or trailing garbage present")
    return bank


def save(bank: OvfBank, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot(bank))


def load(path) -> OvfBank:
    with open(path, "rb") as fh:
        return restore(fh.read())
