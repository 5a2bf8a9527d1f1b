"""Benchmark problems and the episode adapter used by the learner.

Five problems are registered: three planar multi-region systems ("ex1",
"ex2", "ex3") and two scalar two-mode systems with known minimum-principle
solutions ("analytic1", "analytic2").  Observations are unit-scaled state
channels plus normalized time; rewards are negated left-endpoint running
cost, so the negated episode return equals the rollout cost exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .systems import (
    GEQ,
    LEQ,
    AffineBoundary,
    Mode,
    ModeDynamics,
    RegionSpec,
    StageCost,
    SwitchedSystem,
    classify,
    _check_finite,
)
from .simulate import IntegratorConfig, Trajectory, rollout_policy, step_with_events


@dataclass(frozen=True, eq=False)
class EnvConfig:
    """A switched system plus start state, observation scaling, and stepper."""

    name: str
    system: SwitchedSystem
    x0: np.ndarray
    obs_scale: np.ndarray
    integrator: IntegratorConfig

    def __post_init__(self) -> None:
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        scale = np.atleast_1d(np.asarray(self.obs_scale, dtype=float))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "obs_scale", scale)
        if x0.size != self.system.n_x or scale.size != self.system.n_x:
            raise ValueError("x0 and obs_scale must match the state dimension")
        if np.any(scale <= 0):
            raise ValueError("obs_scale entries must be positive")
        if self.system.horizon <= 0:
            raise ValueError("environments need a positive horizon")
        n = round(self.system.horizon / self.integrator.dt)
        if n < 1 or abs(n * self.integrator.dt - self.system.horizon) > 1e-12:
            raise ValueError("horizon must be an exact multiple of dt")

    @property
    def horizon_steps(self) -> int:
        return round(self.system.horizon / self.integrator.dt)

    @property
    def obs_dim(self) -> int:
        return self.system.n_x + 1

    @property
    def act_dim(self) -> int:
        return self.system.n_u

    @property
    def control_scale(self) -> np.ndarray:
        lo, hi = self.system.control_bounds
        return np.maximum(np.abs(lo), np.abs(hi))

    def observe(self, x: np.ndarray, t: float) -> np.ndarray:
        """Scaled observation [x / obs_scale, t / t_f]."""
        x = np.asarray(x, dtype=float)
        return np.concatenate([x / self.obs_scale, [t / self.system.horizon]])


class Episode:
    """Mutable rollout cursor over an EnvConfig, gym-style."""

    def __init__(self, env: EnvConfig):
        self.env = env
        self.reset()

    def reset(self) -> np.ndarray:
        self.x = self.env.x0.copy()
        self.k = 0
        self.done = False
        self.undiscounted_return = 0.0
        return self.env.observe(self.x, 0.0)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        """Apply one zero-order-hold action.

        Returns ``(obs, reward, done)`` with ``reward = -L(x, u) * dt``
        evaluated at the executed (clamped) control.

        Raises:
            RuntimeError: the episode already ended; call ``reset``.
        """
        if self.done:
            raise RuntimeError("episode is done; call reset() before stepping again")
        env = self.env
        u = env.system.clamp(_check_finite("action", action))
        t = self.k * env.integrator.dt
        mode = classify(env.system, self.x)
        cost = env.system.mode(mode).cost.value(self.x, u) * env.integrator.dt
        self.x, _ = step_with_events(env.system, self.x, u, t, env.integrator)
        self.k += 1
        self.done = self.k >= env.horizon_steps
        reward = -cost
        if self.done:
            reward -= env.system.terminal(self.x)
        self.undiscounted_return += reward
        return env.observe(self.x, self.k * env.integrator.dt), reward, self.done


def greedy_rollout(env: EnvConfig, policy: Callable) -> Trajectory:
    """Noise-free closed-loop rollout of ``policy(x, t)`` on the env's system."""
    return rollout_policy(env.system, env.x0, policy, None, env.integrator)


# ---------------------------------------------------------------------------
# Planar four-region problem.  The regions partition the plane around the
# corner states (-5,-5) and (-2,-2); the diagonal x1 = x2 separates regions
# 2 and 3 on the band between the corners.


def _four_region_system(cost_scales, horizon=2.0, u_max=10.0):
    m12 = AffineBoundary("m12", [0.0, 1.0], 5.0)   # x2 = -5
    m13 = AffineBoundary("m13", [1.0, 0.0], 5.0)   # x1 = -5
    m23 = AffineBoundary("m23", [1.0, -1.0], 0.0)  # x1 = x2
    m24 = AffineBoundary("m24", [1.0, 0.0], 2.0)   # x1 = -2
    m34 = AffineBoundary("m34", [0.0, 1.0], 2.0)   # x2 = -2
    regions = (
        RegionSpec(1, ((m13, LEQ), (m12, LEQ)), [-8.0, -8.0]),
        RegionSpec(2, ((m12, GEQ), (m23, LEQ), (m24, LEQ)), [-6.0, 0.0]),
        RegionSpec(3, ((m13, GEQ), (m23, GEQ), (m34, LEQ)), [0.0, -6.0]),
        RegionSpec(4, ((m24, GEQ), (m34, GEQ)), [0.0, 0.0]),
    )
    A = (
        [[-1.0, 2.0], [-2.0, -1.0]],
        [[-1.0, -2.0], [1.0, -0.5]],
        [[-0.5, -5.0], [1.0, -0.5]],
        [[-1.0, 0.0], [2.0, -1.0]],
    )
    B = [[1.0], [1.0]]
    modes = tuple(
        Mode(reg, ModeDynamics.linear(A[i], B), StageCost.quadratic(cost_scales[i], 2, 1))
        for i, reg in enumerate(regions)
    )
    return SwitchedSystem(
        modes=modes,
        horizon=horizon,
        control_bounds=([-u_max], [u_max]),
        fallback_mode=4,
    )


def make_example1(dt: float = 0.01) -> EnvConfig:
    """Four spiraling linear modes, uniform cost 0.5(|x|^2 + u^2), x0=(-8,-6)."""
    sys = _four_region_system((0.5, 0.5, 0.5, 0.5))
    return EnvConfig("ex1", sys, [-8.0, -6.0], [10.0, 10.0],
                     IntegratorConfig(dt=dt, on_zeno="chatter"))


def make_example2(dt: float = 0.01) -> EnvConfig:
    """Same geometry as ex1 but region 3 costs ten times more."""
    sys = _four_region_system((0.5, 0.5, 5.0, 0.5))
    return EnvConfig("ex2", sys, [-8.0, -6.0], [10.0, 10.0],
                     IntegratorConfig(dt=dt, on_zeno="chatter"))


def make_example3(dt: float = 0.01) -> EnvConfig:
    """Seven modes on a 3x2 grid of boxes in [0,10]^2 plus the complement."""
    v0 = AffineBoundary("x1=0", [1.0, 0.0], 0.0)
    v3 = AffineBoundary("x1=3", [1.0, 0.0], -3.0)
    v7 = AffineBoundary("x1=7", [1.0, 0.0], -7.0)
    v10 = AffineBoundary("x1=10", [1.0, 0.0], -10.0)
    h0 = AffineBoundary("x2=0", [0.0, 1.0], 0.0)
    h5 = AffineBoundary("x2=5", [0.0, 1.0], -5.0)
    h10 = AffineBoundary("x2=10", [0.0, 1.0], -10.0)

    def box(mode_id, xlo, xhi, ylo, yhi, witness):
        return RegionSpec(
            mode_id,
            ((xlo, GEQ), (xhi, LEQ), (ylo, GEQ), (yhi, LEQ)),
            witness,
        )

    regions = (
        box(1, v0, v3, h5, h10, [1.5, 7.5]),
        box(2, v3, v7, h5, h10, [5.0, 7.5]),
        box(3, v7, v10, h5, h10, [8.5, 7.5]),
        box(4, v0, v3, h0, h5, [1.5, 2.5]),
        box(5, v3, v7, h0, h5, [5.0, 2.5]),
        box(6, v7, v10, h0, h5, [8.5, 2.5]),
        RegionSpec(7, (), [-1.0, -1.0]),  # complement of the grid
    )
    A = (
        [[-1.0, 0.0], [0.0, 1.5]],
        [[-1.0, 2.0], [-2.0, -1.0]],
        [[-1.0, 4.0], [-4.0, -1.0]],
        [[-0.5, 0.0], [0.0, -0.7]],
        [[-0.5, -5.0], [1.0, -0.5]],
        [[-1.0, -5.0], [1.0, -0.5]],
        [[-1.0, 0.0], [2.0, -1.0]],
    )
    B = [[1.0], [1.0]]
    modes = tuple(
        Mode(reg, ModeDynamics.linear(A[i], B), StageCost.quadratic(1.0, 2, 1))
        for i, reg in enumerate(regions)
    )
    sys = SwitchedSystem(
        modes=modes,
        horizon=2.0,
        control_bounds=([-10.0], [10.0]),
        fallback_mode=7,
    )
    return EnvConfig("ex3", sys, [8.0, 8.0], [10.0, 10.0],
                     IntegratorConfig(dt=dt, on_zeno="chatter"))


def _two_mode_scalar(a_upper, b_upper, a_lower, b_lower, name):
    s = AffineBoundary("s", [1.0], -1.0)  # x = 1
    modes = (
        Mode(
            RegionSpec(1, ((s, GEQ),), [2.0]),
            ModeDynamics.linear([[a_upper]], [[b_upper]]),
            StageCost.quadratic(0.5, 1, 1),
        ),
        Mode(
            RegionSpec(2, ((s, LEQ),), [0.0]),
            ModeDynamics.linear([[a_lower]], [[b_lower]]),
            StageCost.quadratic(0.5, 1, 1),
        ),
    )
    sys = SwitchedSystem(
        modes=modes,
        horizon=1.0,
        control_bounds=([-50.0], [50.0]),
        fallback_mode=1,
    )
    return EnvConfig(name, sys, [2.0], [5.0], IntegratorConfig(dt=0.01))


def make_analytic1(dt: float = 0.01) -> EnvConfig:
    """Scalar gain switch at x=1: dx/dt = 2u above, u below; x0 = 2."""
    env = _two_mode_scalar(0.0, 2.0, 0.0, 1.0, "analytic1")
    return replace(env, integrator=IntegratorConfig(dt=dt, on_zeno="chatter"))


def make_analytic2(dt: float = 0.01) -> EnvConfig:
    """Scalar drift switch at x=1: dx/dt = 2x+u above, -x+u below; x0 = 2."""
    env = _two_mode_scalar(2.0, 1.0, -1.0, 1.0, "analytic2")
    return replace(env, integrator=IntegratorConfig(dt=dt, on_zeno="chatter"))


ENV_MAKERS: dict[str, Callable[..., EnvConfig]] = {
    "ex1": make_example1,
    "ex2": make_example2,
    "ex3": make_example3,
    "analytic1": make_analytic1,
    "analytic2": make_analytic2,
}


def make_env(name: str, dt: float = 0.01) -> EnvConfig:
    """Look up a benchmark by CLI name."""
    try:
        maker = ENV_MAKERS[name]
    except KeyError:
        raise KeyError(f"unknown env {name!r}; choose from {sorted(ENV_MAKERS)}") from None
    return maker(dt=dt)


def boundary_segments(env: EnvConfig, box, n_samples: int = 400):
    """Portions of each boundary line that actually separate two modes.

    Used for plot overlays.  Returns a list of ``(name, (2, 2) endpoints)``
    tuples clipped to ``box = (lo, hi)`` corners.  Planar systems only.
    """
    sys = env.system
    if sys.n_x != 2:
        raise ValueError("boundary segments are defined for planar systems")
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    eps = 1e-6 * float(np.linalg.norm(hi - lo))
    segments = []
    for b in sys.boundaries:
        n = b.normal / np.linalg.norm(b.normal)
        d = np.array([-n[1], n[0]])
        p0 = -b.offset * b.normal / float(b.normal @ b.normal)
        # Clip the parametrized line p0 + t d to the box.
        t_lo, t_hi = -np.inf, np.inf
        ok = True
        for i in range(2):
            if abs(d[i]) < 1e-15:
                if not lo[i] - 1e-12 <= p0[i] <= hi[i] + 1e-12:
                    ok = False
                    break
            else:
                c1 = (lo[i] - p0[i]) / d[i]
                c2 = (hi[i] - p0[i]) / d[i]
                t_lo = max(t_lo, min(c1, c2))
                t_hi = min(t_hi, max(c1, c2))
        if not ok or t_lo >= t_hi:
            continue
        ts = np.linspace(t_lo, t_hi, n_samples + 1)
        mids = p0 + 0.5 * (ts[:-1] + ts[1:])[:, None] * d
        sep = np.array(
            [classify(sys, p + eps * n) != classify(sys, p - eps * n) for p in mids]
        )
        start = None
        for i in range(n_samples + 1):
            inside = i < n_samples and sep[i]
            if inside and start is None:
                start = i
            elif not inside and start is not None:
                segments.append((b.name, np.stack([p0 + ts[start] * d, p0 + ts[i] * d])))
                start = None
    return segments
