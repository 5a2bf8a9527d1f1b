"""SVG figure generation for benchmark runs.

All writers use the Agg backend, emit SVG with the Date field stripped
(so repeated runs produce identical bytes), and return a small metadata
dict describing what was drawn, which the tests inspect instead of
parsing the figures.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .envs import EnvConfig, boundary_segments
from .simulate import Trajectory

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _finish(fig, path) -> None:
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def phase_plot(env: EnvConfig, trajs: dict[str, Trajectory], path) -> dict:
    """State-plane plot of one or more trajectories with region borders.

    Only meaningful for 2-D state; scalar systems fall back to x(t).
    """
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    overlays = []
    if env.system.n_x == 2:
        xs = np.concatenate([t.states for t in trajs.values()])
        pad = 0.15 * (xs.max(axis=0) - xs.min(axis=0) + 1.0)
        box = (xs.min(axis=0) - pad, xs.max(axis=0) + pad)
        for name, seg in boundary_segments(env, box):
            ax.plot(seg[:, 0], seg[:, 1], color="0.55", lw=0.9, ls="--", zorder=1)
            overlays.append(name)
        for label, traj in trajs.items():
            ax.plot(traj.states[:, 0], traj.states[:, 1], lw=1.4, label=label, zorder=3)
            ax.plot(*traj.states[0], marker="o", ms=5, color="black", zorder=4)
            for ev in traj.events:
                ax.plot(*ev.state, marker="x", ms=5, color="crimson", zorder=4)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    else:
        for label, traj in trajs.items():
            ax.plot(traj.times, traj.states[:, 0], lw=1.4, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("x")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{env.name}: state trajectories")
    _finish(fig, path)
    return {
        "kind": "phase",
        "curves": len(trajs),
        "overlays": overlays,
        "events": {k: len(t.events) for k, t in trajs.items()},
    }


def control_plot(env: EnvConfig, trajs: dict[str, Trajectory], path) -> dict:
    """Piecewise-constant control signals against time."""
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    for label, traj in trajs.items():
        ax.step(traj.times[:-1], traj.controls[:, 0], where="post", lw=1.2, label=label)
    lo, hi = env.system.control_bounds
    ax.axhline(lo[0], color="0.7", lw=0.8, ls=":")
    ax.axhline(hi[0], color="0.7", lw=0.8, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{env.name}: control")
    _finish(fig, path)
    return {"kind": "control", "curves": len(trajs)}


def learning_curve_plot(
    env_name: str,
    curves: dict[int, np.ndarray],
    path,
    reference: float | None = None,
) -> dict:
    """Per-seed evaluation cost against episode, optional reference line."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for seed, costs in sorted(curves.items()):
        ax.plot(np.arange(1, len(costs) + 1), costs, lw=1.0, alpha=0.8, label=f"seed {seed}")
    if reference is not None:
        ax.axhline(reference, color="black", lw=1.1, ls="--", label="reference")
    ax.set_xlabel("episode")
    ax.set_ylabel("evaluation cost")
    ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{env_name}: learning curves")
    _finish(fig, path)
    return {
        "kind": "learning",
        "curves": len(curves),
        "reference": reference,
        "seeds": sorted(curves),
    }


def iteration_plot(env_name: str, histories: dict[int, np.ndarray], path) -> dict:
    """Cost per outer iteration for iterative trajectory optimizers."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for seed, hist in sorted(histories.items()):
        ax.plot(np.arange(len(hist)), hist, lw=1.2, marker=".", label=f"run {seed}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{env_name}: cost per iteration")
    _finish(fig, path)
    return {"kind": "iterations", "curves": len(histories)}


def value_slice_plot(env_name: str, xs: np.ndarray, values: np.ndarray, path) -> dict:
    """Value function along a 1-D grid at one time layer."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(xs, values, lw=1.4)
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.set_title(f"{env_name}: value slice")
    _finish(fig, path)
    return {"kind": "value-slice", "points": int(len(xs))}
