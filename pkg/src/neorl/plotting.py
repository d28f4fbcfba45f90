"""Learning-curve figures written next to the CSV output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

from neorl.harness import AggregateCurve

STYLE = {
    "figsize": (7.0, 4.3),
    "dpi": 120,
}
CONTROL_COLOR = "black"
SUM_COLOR = "0.55"


def _new_axes(xlabel: str, ylabel: str):
    fig = Figure(figsize=STYLE["figsize"], dpi=STYLE["dpi"])
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    return fig, ax


def _color(label: str):
    if label == "brownian":
        return CONTROL_COLOR
    if label.startswith("sum"):
        return SUM_COLOR
    return None


def _band(ax, t, curve: AggregateCurve, color):
    if curve.runs > 1:
        ax.fill_between(t, curve.mean - curve.stderr, curve.mean + curve.stderr, color=color, alpha=0.2, lw=0)


def plot_accumulated(curves: Sequence[AggregateCurve], path, title: str = "") -> Path:
    """Accumulated score against time step, one line per agent."""
    fig, ax = _new_axes("time step", "accumulated score")
    for curve in curves:
        acc = curve.cumulative()
        t = np.arange(1, len(acc) + 1)
        line, = ax.plot(t, acc.mean, label=curve.label, color=_color(curve.label), lw=1.4)
        _band(ax, t, acc, line.get_color())
    ax.axhline(0.0, color="0.3", lw=0.6)
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    return Path(path)


def plot_reward_rate(curves: Sequence[AggregateCurve], path, window: int = 1001, title: str = "") -> Path:
    """Smoothed per-time-step mean reward (proficiency) against time step."""
    fig, ax = _new_axes("time step", f"mean reward per step (window {window})")
    for curve in curves:
        sm = curve.smoothed(window)
        t = np.arange(1, len(sm) + 1)
        style = "--" if curve.label.startswith("sum") else "-"
        line, = ax.plot(t, sm.mean, style, label=curve.label, color=_color(curve.label), lw=1.4)
        _band(ax, t, sm, line.get_color())
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    return Path(path)
