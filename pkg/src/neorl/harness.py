"""Experiment runs, multi-run aggregation and CSV output.

A run drives one fresh agent through ``steps`` WaterWorld ticks and records
the reward of every tick.  Run ``i`` of an experiment uses seed
``base_seed + i``; the seed is split into independent environment and policy
streams with :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from neorl import waterworld
from neorl.composer import WEIGHTING_MODES, layer_coefficients, q_field_flat, rewarded_flat, select_action
from neorl.nres import NresStack, flat_index
from neorl.ovf import LearnerParams, OvfBank

log = logging.getLogger(__name__)

MODES = ("neorl", "brownian")


class ConfigError(ValueError):
    pass


class HarnessIOError(OSError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    environment: waterworld.WorldConfig = field(default_factory=waterworld.WorldConfig)
    layers: tuple[int, ...] = (50,)
    learner: LearnerParams = field(default_factory=lambda: LearnerParams(alpha=0.5, gamma=0.9))
    epsilon: float = 0.05
    weighting: str = "inverse_area"
    steps: int = 150_000
    runs: int = 100
    base_seed: int = 0
    mode: str = "neorl"
    smoothing_window: int = 1001

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.weighting not in WEIGHTING_MODES:
            raise ConfigError(f"weighting must be one of {WEIGHTING_MODES}, got {self.weighting!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.smoothing_window < 1:
            raise ConfigError("smoothing_window must be >= 1")
        if self.mode == "neorl":
            NresStack.from_resolutions(self.layers)

    @property
    def stack(self) -> NresStack:
        return NresStack.from_resolutions(self.layers)

    def label(self) -> str:
        if self.mode == "brownian":
            return "brownian"
        return "+".join(f"N{n}" for n in self.layers)


_AGENT_KEYS = {"layers", "alpha", "gamma", "q_init", "epsilon", "weighting"}
_EXPERIMENT_KEYS = {"steps", "runs", "base_seed", "mode", "smoothing_window", "layers"}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from the ``[environment]``/``[agent]``/``[experiment]`` tables."""
    unknown = set(data) - {"environment", "agent", "experiment"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    agent = dict(data.get("agent", {}))
    experiment = dict(data.get("experiment", {}))
    for name, table, keys in (("agent", agent, _AGENT_KEYS), ("experiment", experiment, _EXPERIMENT_KEYS)):
        extra = set(table) - keys
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")

    kwargs = {}
    layers = agent.pop("layers", experiment.pop("layers", None))
    if layers is not None:
        kwargs["layers"] = tuple(int(n) for n in layers)
    learner = {k: float(agent.pop(k)) for k in ("alpha", "gamma", "q_init") if k in agent}
    if learner:
        kwargs["learner"] = LearnerParams(**learner)
    kwargs.update(agent)
    kwargs.update(experiment)
    if "environment" in data:
        kwargs["environment"] = waterworld.WorldConfig.from_mapping(dict(data["environment"]))
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise HarnessIOError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "environment": asdict(config.environment),
        "agent": {"layers": list(config.layers), **asdict(config.learner),
                  "epsilon": config.epsilon, "weighting": config.weighting},
        "experiment": {"steps": config.steps, "runs": config.runs, "base_seed": config.base_seed,
                       "mode": config.mode, "smoothing_window": config.smoothing_window},
    }


@dataclass
class RunRecord:
    run_id: int
    reward: np.ndarray

    @property
    def accumulated(self) -> np.ndarray:
        return np.cumsum(self.reward)

    def __len__(self) -> int:
        return len(self.reward)


@dataclass
class AggregateCurve:
    mean: np.ndarray
    stderr: np.ndarray
    runs: int
    label: str = ""

    def __len__(self) -> int:
        return len(self.mean)

    def smoothed(self, window: int) -> "AggregateCurve":
        return AggregateCurve(moving_average(self.mean, window), moving_average(self.stderr, window),
                              self.runs, self.label)

    def cumulative(self) -> "AggregateCurve":
        return AggregateCurve(np.cumsum(self.mean), np.sqrt(np.cumsum(self.stderr ** 2)), self.runs, self.label)


def run_seeds(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (environment, policy) generators derived from one run seed."""
    env_seq, policy_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(policy_seq)


def run_agent(config: ExperimentConfig, seed: int, bank: OvfBank | None = None,
              learn: bool = True) -> tuple[RunRecord, OvfBank | None]:
    """Run one agent; returns its record and (for neoRL mode) its bank.

    Passing ``bank`` continues from existing experience instead of a fresh
    bank; ``learn=False`` freezes it.
    """
    env_rng, policy_rng = run_seeds(seed)
    world = waterworld.reset(config.environment, env_rng)
    rewards = np.zeros(config.steps)
    step = waterworld.step

    if config.mode == "brownian":
        idle = np.zeros(4)
        for t in range(config.steps):
            action = select_action(idle, 1.0, policy_rng)
            rewards[t] = step(world, action)[1].reward
        return RunRecord(seed, rewards), None

    if bank is None:
        bank = OvfBank(config.stack, config.learner)
    elif bank.stack.resolutions != tuple(config.layers):
        raise ConfigError(f"bank layers {bank.stack.resolutions} differ from config layers {config.layers}")
    resolutions = bank.stack.resolutions
    coefs = layer_coefficients(bank.stack, config.weighting)
    epsilon = config.epsilon
    pos = world.agent_pos
    agent = [flat_index(pos[0], pos[1], n) for n in resolutions]
    for t in range(config.steps):
        points, weights = waterworld.eoi_arrays(world)
        field = q_field_flat(bank, agent, rewarded_flat(points, weights, resolutions), coefs)
        action = select_action(field, epsilon, policy_rng)
        rewards[t] = step(world, action)[1].reward
        nxt = [flat_index(pos[0], pos[1], n) for n in resolutions]
        if learn:
            bank.update_flat(agent, action, nxt)
        agent = nxt
    return RunRecord(seed, rewards), bank


def run_single(config: ExperimentConfig, seed: int) -> RunRecord:
    return run_agent(config, seed)[0]


def _run_worker(args):
    config, seed = args
    return run_single(config, seed)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> tuple[list[RunRecord], AggregateCurve]:
    seeds = [config.base_seed + i for i in range(config.runs)]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_worker, [(config, s) for s in seeds]))
    else:
        records = []
        for s in seeds:
            log.info("%s: run seed=%d (%d steps)", config.label(), s, config.steps)
            records.append(run_single(config, s))
    return records, aggregate(records, label=config.label())


def aggregate(records: Sequence[RunRecord], series: str = "reward", label: str = "") -> AggregateCurve:
    """Per-timestep mean and standard error of ``series`` across runs.

    Records are ordered by ``run_id`` first so the result does not depend on
    the order runs finished in.
    """
    if not records:
        raise ValueError("cannot aggregate zero runs")
    ordered = sorted(records, key=lambda r: r.run_id)
    lengths = {len(r) for r in ordered}
    if len(lengths) != 1:
        raise ValueError(f"runs have different horizons: {sorted(lengths)}")
    data = np.stack([getattr(r, series) for r in ordered])
    mean = data.mean(axis=0)
    if len(ordered) > 1:
        stderr = data.std(axis=0, ddof=1) / math.sqrt(len(ordered))
    else:
        stderr = np.zeros_like(mean)
    return AggregateCurve(mean, stderr, len(ordered), label)


def sum_of_parts(curves: Sequence[AggregateCurve], label: str = "sum of parts") -> AggregateCurve:
    """Component-wise sum of several curves (standard errors add in quadrature)."""
    if not curves:
        raise ValueError("need at least one curve")
    n = len(curves[0])
    if any(len(c) != n for c in curves):
        raise ValueError(f"curve horizons differ: {[len(c) for c in curves]}")
    mean = np.sum([c.mean for c in curves], axis=0)
    stderr = np.sqrt(np.sum([c.stderr ** 2 for c in curves], axis=0))
    return AggregateCurve(mean, stderr, min(c.runs for c in curves), label)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average; near the ends the window shrinks to what exists."""
    x = np.asarray(x, dtype=float)
    if window <= 1 or len(x) == 0:
        return x.copy()
    half = window // 2
    c = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(len(x))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(x))
    return (c[hi] - c[lo]) / (hi - lo)


def _fmt(x) -> str:
    return repr(float(x))


def emit_csv(data, path) -> Path:
    """Write a list of :class:`RunRecord` or one :class:`AggregateCurve` as CSV."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if isinstance(data, AggregateCurve):
                writer.writerow(["timestep", "mean", "stderr"])
                writer.writerows(
                    (t, _fmt(m), _fmt(s)) for t, (m, s) in enumerate(zip(data.mean, data.stderr), start=1))
            else:
                records = [data] if isinstance(data, RunRecord) else list(data)
                writer.writerow(["timestep", "run_id", "reward", "accumulated"])
                for rec in records:
                    writer.writerows(
                        (t, rec.run_id, _fmt(r), _fmt(a))
                        for t, (r, a) in enumerate(zip(rec.reward, rec.accumulated), start=1))
    except OSError as exc:
        raise HarnessIOError(f"cannot write CSV {path}: {exc}") from exc
    return path


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """``dataclasses.replace`` that ignores ``None`` values (unset CLI flags)."""
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
