"""Seedable WaterWorld on the unit square.

The agent is an inertial point body pushed along the four cardinal
directions.  Eight creeps (by default) drift at constant speed and bounce
specularly off the walls.  Touching a creep captures it: green creeps pay +1,
red creeps -1.  Captured creeps respawn with a random position, heading and
demeanor, unless no green creep is left, in which case the whole board is
re-dealt and the agent earns a +5 bonus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from neorl.composer import ElementOfInterest
from neorl.ovf import Action

_UNIT = np.array([(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)])

# every point of the unit square has a corner at least this far away
_MAX_GUARANTEED_DIST = math.sqrt(0.5)
_MAX_PLACEMENT_TRIES = 10_000


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    creep_count: int = 8
    agent_radius: float = 0.01
    creep_radius: float = 0.01
    accel: float = 0.005
    drag: float = 0.9
    creep_speed: float = 0.003
    dt: float = 1.0
    respawn_min_dist: float = 0.2
    # neutral_green_fraction(8): a random forager breaks even on average
    green_fraction: float = 0.47866
    reward_green: float = 1.0
    reward_red: float = -1.0
    reward_board_reset: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.creep_count < 1:
            raise ConfigurationError("creep_count must be >= 1")
        if self.agent_radius <= 0 or self.creep_radius <= 0:
            raise ConfigurationError("radii must be positive")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if not 0.0 < self.drag <= 1.0:
            raise ConfigurationError("drag must lie in (0, 1]")
        if not 0.0 < self.green_fraction < 1.0:
            raise ConfigurationError("green_fraction must lie strictly between 0 and 1")
        if self.accel < 0 or self.creep_speed < 0:
            raise ConfigurationError("accel and creep_speed must be non-negative")
        if self.respawn_min_dist >= _MAX_GUARANTEED_DIST:
            raise ConfigurationError(
                f"respawn_min_dist={self.respawn_min_dist} cannot be honoured for every agent position")
        if self.agent_radius + self.creep_radius > self.respawn_min_dist:
            raise ConfigurationError(
                "agent_radius + creep_radius exceeds respawn_min_dist: creeps would spawn inside the capture zone")

    @property
    def capture_dist(self) -> float:
        return self.agent_radius + self.creep_radius

    @classmethod
    def from_mapping(cls, values: dict) -> "WorldConfig":
        known = {f.name for f in fields(cls)}
        extra = set(values) - known
        if extra:
            raise ConfigurationError(f"unknown environment keys: {sorted(extra)}")
        return cls(**values)


@dataclass
class StepOutcome:
    reward: float = 0.0
    captures: list = field(default_factory=list)  # (is_green, creep index)
    board_reset: bool = False


@dataclass
class WorldState:
    config: WorldConfig
    agent_pos: np.ndarray
    agent_vel: np.ndarray
    creep_pos: np.ndarray
    creep_vel: np.ndarray
    creep_green: np.ndarray
    rng: np.random.Generator

    def same_as(self, other: "WorldState") -> bool:
        """Bit-identical bodies, creeps and RNG state."""
        arrays = ("agent_pos", "agent_vel", "creep_pos", "creep_vel", "creep_green")
        return (self.config == other.config
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and self.rng.bit_generator.state == other.rng.bit_generator.state)


def capture_payoff(green_fraction: float, creep_count: int = 8, reward_green: float = 1.0,
                   reward_red: float = -1.0, reward_board_reset: float = 5.0) -> float:
    """Long-run mean reward per capture when every capture hits a uniformly random creep.

    The board is summarised by its green count ``g`` in ``1..creep_count``.
    Capturing a green pays ``reward_green`` and, if it was the last one,
    ``reward_board_reset`` followed by a full re-deal (at least one green);
    otherwise the captured creep respawns green with probability
    ``green_fraction``.  Returns the capture reward averaged over the
    stationary distribution of this chain.
    """
    c, p = creep_count, green_fraction
    deal = np.array([math.comb(c, g) * p ** g * (1 - p) ** (c - g) for g in range(c + 1)])
    deal[1] += deal[0]
    trans = np.zeros((c + 1, c + 1))
    payoff = np.zeros(c + 1)
    for g in range(1, c + 1):
        hit_green, hit_red = g / c, (c - g) / c
        payoff[g] = hit_green * reward_green + hit_red * reward_red
        if g == 1:
            payoff[g] += hit_green * reward_board_reset
            trans[g, 1:] += hit_green * deal[1:]
        else:
            trans[g, g - 1] += hit_green * (1 - p)
            trans[g, g] += hit_green * p
        if g < c:
            trans[g, g] += hit_red * (1 - p)
            trans[g, g + 1] += hit_red * p
    trans, payoff = trans[1:, 1:], payoff[1:]
    # stationary distribution: left null vector of (P - I) with sum 1
    a = np.vstack([trans.T - np.eye(c), np.ones(c)])
    b = np.zeros(c + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(a, b, rcond=None)[0]
    return float(pi @ payoff)


def neutral_green_fraction(creep_count: int = 8, tol: float = 1e-10, **rewards) -> float:
    """Green respawn probability at which :func:`capture_payoff` is zero (bisection)."""
    lo, hi = 1e-6, 1 - 1e-6
    f_lo = capture_payoff(lo, creep_count, **rewards)
    if f_lo * capture_payoff(hi, creep_count, **rewards) > 0:
        raise ValueError("capture payoff does not change sign on (0, 1)")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = capture_payoff(mid, creep_count, **rewards)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _spawn(rng: np.random.Generator, cfg: WorldConfig, agent_pos: np.ndarray):
    """Position and velocity for one creep, clear of the agent."""
    for _ in range(_MAX_PLACEMENT_TRIES):
        pos = rng.random(2)
        if math.hypot(pos[0] - agent_pos[0], pos[1] - agent_pos[1]) >= cfg.respawn_min_dist:
            break
    else:
        raise ConfigurationError("could not place a creep away from the agent")
    heading = rng.uniform(0.0, 2.0 * math.pi)
    vel = np.array([math.cos(heading), math.sin(heading)]) * cfg.creep_speed
    return pos, vel


def _deal(state: WorldState) -> None:
    cfg, rng = state.config, state.rng
    for i in range(cfg.creep_count):
        state.creep_pos[i], state.creep_vel[i] = _spawn(rng, cfg, state.agent_pos)
    state.creep_green[:] = rng.random(cfg.creep_count) < cfg.green_fraction
    if not state.creep_green.any():
        state.creep_green[rng.integers(cfg.creep_count)] = True


def reset(config: WorldConfig, rng: np.random.Generator | None = None) -> WorldState:
    """Fresh board: agent at rest in the centre, creeps dealt at random.

    ``rng`` defaults to a generator seeded from ``config.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    c = config.creep_count
    state = WorldState(
        config=config,
        agent_pos=np.array([0.5, 0.5]),
        agent_vel=np.zeros(2),
        creep_pos=np.zeros((c, 2)),
        creep_vel=np.zeros((c, 2)),
        creep_green=np.zeros(c, dtype=bool),
        rng=rng,
    )
    _deal(state)
    return state


def _move_agent(state: WorldState, action: int) -> None:
    cfg = state.config
    vel, pos = state.agent_vel, state.agent_pos
    vel *= cfg.drag
    vel += (cfg.accel * cfg.dt) * _UNIT[action]
    pos += vel * cfg.dt
    for d in (0, 1):
        if pos[d] < 0.0:
            pos[d] = 0.0
            vel[d] = 0.0
        elif pos[d] > 1.0:
            pos[d] = 1.0
            vel[d] = 0.0


def _move_creeps(state: WorldState) -> None:
    pos, vel = state.creep_pos, state.creep_vel
    pos += vel * state.config.dt
    # loop only matters when one tick can cross the whole arena
    while True:
        low = pos < 0.0
        high = pos > 1.0
        if not (low.any() or high.any()):
            return
        pos[low] = -pos[low]
        vel[low] = -vel[low]
        pos[high] = 2.0 - pos[high]
        vel[high] = -vel[high]


def step(state: WorldState, action) -> tuple[WorldState, StepOutcome]:
    """Advance the world by one tick.  ``state`` is updated in place and returned."""
    cfg = state.config
    _move_agent(state, int(action))
    _move_creeps(state)

    outcome = StepOutcome()
    delta = state.creep_pos - state.agent_pos
    dist2 = np.einsum("ij,ij->i", delta, delta)
    captured = np.flatnonzero(dist2 < cfg.capture_dist * cfg.capture_dist)
    if len(captured) == 0:
        return state, outcome

    for i in captured:
        green = bool(state.creep_green[i])
        outcome.captures.append((green, int(i)))
        outcome.reward += cfg.reward_green if green else cfg.reward_red

    remaining = np.ones(cfg.creep_count, dtype=bool)
    remaining[captured] = False
    if not state.creep_green[remaining].any():
        outcome.board_reset = True
        outcome.reward += cfg.reward_board_reset
        _deal(state)
    else:
        rng = state.rng
        for i in captured:
            state.creep_pos[i], state.creep_vel[i] = _spawn(rng, cfg, state.agent_pos)
            state.creep_green[i] = rng.random() < cfg.green_fraction
    return state, outcome


def observe(state: WorldState) -> tuple[tuple[float, float], list[ElementOfInterest]]:
    """Agent position and one element of interest per creep."""
    cfg = state.config
    eois = [
        ElementOfInterest((float(p[0]), float(p[1])), cfg.reward_green if g else cfg.reward_red)
        for p, g in zip(state.creep_pos, state.creep_green)
    ]
    return (float(state.agent_pos[0]), float(state.agent_pos[1])), eois


def eoi_arrays(state: WorldState) -> tuple[np.ndarray, np.ndarray]:
    """Creep positions and signed weights as arrays (allocation-light :func:`observe`)."""
    cfg = state.config
    weights = np.where(state.creep_green, cfg.reward_green, cfg.reward_red)
    return state.creep_pos, weights


__all__ = ["Action", "ConfigurationError", "StepOutcome", "WorldConfig", "WorldState",
           "capture_payoff", "eoi_arrays", "neutral_green_fraction", "observe", "reset", "step"]
