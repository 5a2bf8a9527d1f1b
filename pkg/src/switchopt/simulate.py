"""Fixed-step integration of switched dynamics with event localization.

The stepper advances one control interval at a time under zero-order-hold
control.  When the integrated substep crosses a region boundary, the
crossing time is bisected down to ``event_time_tol``, the crossing is
recorded, and integration resumes with the newly active mode.  Running cost
uses the left-endpoint rule ``L(x_k, u_k) * dt`` so every solver in the
package accumulates cost over exactly the same discrete problem.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .systems import (
    InvalidInputError,
    SwitchedSystem,
    classify,
    classify_batch,
    _check_finite,
)

SCHEMES = ("rk4", "euler")


class ZenoError(RuntimeError):
    """Too many switching events inside a single control interval."""

    def __init__(self, time: float, state: np.ndarray, count: int, step_index: int | None = None):
        self.time = time
        self.state = np.asarray(state, dtype=float)
        self.count = count
        self.step_index = step_index
        where = f" during step {step_index}" if step_index is not None else ""
        super().__init__(
            f"{count} switching events within one step at t={time:.6g}{where}; "
            "the system is chattering"
        )


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step scheme, event tolerance, and the chattering guard.

    ``on_zeno`` picks the response when more than ``zeno_cap`` mode changes
    land in a single step, which happens exactly on attractive (sliding)
    surfaces where the neighboring fields point at each other.  "raise"
    reports the Zeno behavior as an error.  "chatter" gives up localizing
    further crossings for that step and finishes it with the active mode's
    field held frozen; successive steps then hop across the surface with
    O(dt) amplitude, the fixed-step analogue of sliding.  The benchmark
    envs opt into "chatter" because several of their interfaces are
    attractive under small controls, and both the learners and the
    trajectory optimizer must be able to pass through that regime.
    """

    dt: float = 0.01
    scheme: str = "rk4"
    event_time_tol: float = 1e-9
    zeno_cap: int = 10
    on_zeno: str = "raise"

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not 0 < self.event_time_tol < self.dt:
            raise ValueError("event_time_tol must lie in (0, dt)")
        if self.zeno_cap < 1:
            raise ValueError("zeno_cap must be at least 1")
        if self.on_zeno not in ("raise", "chatter"):
            raise ValueError("on_zeno must be 'raise' or 'chatter'")


@dataclass(frozen=True)
class SwitchEvent:
    """A localized mode change: time, state, modes on both sides, boundary name."""

    time: float
    state: np.ndarray
    from_mode: int
    to_mode: int
    boundary: str


@dataclass
class Trajectory:
    """Sampled rollout: N+1 states, N zero-order-hold controls.

    ``controls`` stores the executed (clamped) inputs.  ``modes[k]`` is the
    active mode when leaving ``states[k]`` and ``step_costs[k]`` is
    ``L(x_k, u_k) * dt``.  ``total_cost`` adds the terminal cost.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    modes: np.ndarray
    step_costs: np.ndarray
    events: list[SwitchEvent] = field(default_factory=list)
    total_cost: float = 0.0

    def __len__(self) -> int:
        return self.controls.shape[0]

    def to_csv(self, path) -> None:
        n_x = self.states.shape[1]
        n_u = self.controls.shape[1] if len(self) else 1
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t"]
                + [f"x{i + 1}" for i in range(n_x)]
                + [f"u{i + 1}" for i in range(n_u)]
                + ["mode", "step_cost"]
            )
            for k in range(len(self)):
                writer.writerow(
                    [repr(float(self.times[k]))]
                    + [repr(float(v)) for v in self.states[k]]
                    + [repr(float(v)) for v in self.controls[k]]
                    + [int(self.modes[k]), repr(float(self.step_costs[k]))]
                )
            writer.writerow(
                [repr(float(self.times[-1]))]
                + [repr(float(v)) for v in self.states[-1]]
                + [""] * n_u
                + ["", ""]
            )

    def events_to_csv(self, path) -> None:
        n_x = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(n_x)] + ["from", "to", "boundary"])
            for ev in self.events:
                writer.writerow(
                    [repr(float(ev.time))]
                    + [repr(float(v)) for v in ev.state]
                    + [ev.from_mode, ev.to_mode, ev.boundary]
                )


def _advance(dyn, x, u, t, h, scheme):
    """One explicit substep of length h with the mode's field frozen."""
    if scheme == "euler":
        return x + h * dyn(x, u, t)
    k1 = dyn(x, u, t)
    k2 = dyn(x + 0.5 * h * k1, u, t + 0.5 * h)
    k3 = dyn(x + 0.5 * h * k2, u, t + 0.5 * h)
    k4 = dyn(x + h * k3, u, t + h)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _bisect_crossing(dyn, x, u, t, h, tol, scheme, normal, offset, start_positive):
    """Earliest sign change of one boundary along the frozen-mode flow.

    Returns the upper bracket end, so the returned time lands strictly on
    the far side of the surface (up to the time tolerance).
    """
    lo, hi = 0.0, h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = normal @ _advance(dyn, x, u, t, mid, scheme) + offset
        # A midpoint landing exactly on the surface counts as the near side,
        # so g at the returned time is strictly on the far side.
        if gm == 0.0 or (gm > 0.0) == start_positive:
            lo = mid
        else:
            hi = mid
    return hi


def step_with_events(
    sys: SwitchedSystem,
    x: np.ndarray,
    u: np.ndarray,
    t: float,
    cfg: IntegratorConfig,
) -> tuple[np.ndarray, list[SwitchEvent]]:
    """Advance one control interval, localizing any boundary crossings.

    Args:
        sys: the switched system.
        x: state at the start of the interval.
        u: commanded control, clamped to the system's bounds before use.
        t: absolute time at the start of the interval.
        cfg: integration settings.

    Returns:
        ``(x_next, events)`` where events are the mode changes inside the
        interval in time order.

    Raises:
        InvalidInputError: non-finite state or control.
        ZenoError: more than ``cfg.zeno_cap`` mode changes in the interval
            and ``cfg.on_zeno == "raise"``; with "chatter" the step instead
            finishes unmonitored in the mode recorded last.
    """
    x = _check_finite("state", x)
    u = _check_finite("control", u)
    u = sys.clamp(u)
    gmat, goff = sys._gmat, sys._goff
    mode = classify(sys, x)
    events: list[SwitchEvent] = []
    remaining = cfg.dt
    tcur = t
    # Boundary crossings without a mode change (a surface extended past the
    # cells it separates) also consume iterations, hence the wide guard.
    max_iters = (cfg.zeno_cap + 2) * (len(sys.boundaries) + 1) + 2
    for _ in range(max_iters):
        if remaining <= 0.0:
            break
        dyn = sys.mode(mode).dynamics
        trial = _advance(dyn, x, u, tcur, remaining, cfg.scheme)
        g0 = gmat @ x + goff
        g1 = gmat @ trial + goff
        crossed = np.flatnonzero(((g0 > 0) & (g1 < 0)) | ((g0 < 0) & (g1 > 0)))
        if crossed.size == 0:
            x = trial
            break
        best_s, best_b = remaining, crossed[0]
        for b in crossed:
            s = _bisect_crossing(
                dyn, x, u, tcur, remaining, cfg.event_time_tol, cfg.scheme,
                gmat[b], goff[b], g0[b] > 0,
            )
            if s < best_s:
                best_s, best_b = s, b
        x = _advance(dyn, x, u, tcur, best_s, cfg.scheme)
        tcur += best_s
        remaining -= best_s
        new_mode = classify(sys, x)
        if new_mode != mode:
            events.append(
                SwitchEvent(tcur, x.copy(), mode, new_mode, sys.boundaries[best_b].name)
            )
            mode = new_mode
            if len(events) > cfg.zeno_cap:
                if cfg.on_zeno == "raise":
                    raise ZenoError(tcur, x, len(events))
                x = _advance(sys.mode(mode).dynamics, x, u, tcur, remaining, cfg.scheme)
                break
    else:
        if cfg.on_zeno == "raise":
            raise ZenoError(tcur, x, len(events))
        x = _advance(sys.mode(mode).dynamics, x, u, tcur, remaining, cfg.scheme)
    return x, events


def _as_control_sequence(sys: SwitchedSystem, u_seq) -> np.ndarray:
    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim == 1:
        u_seq = u_seq[:, None]
    if u_seq.ndim != 2 or u_seq.shape[1] != sys.n_u:
        raise ValueError(f"control sequence must have shape (N, {sys.n_u})")
    return u_seq


def horizon_steps(sys: SwitchedSystem, cfg: IntegratorConfig) -> int:
    n = round(sys.horizon / cfg.dt)
    if abs(n * cfg.dt - sys.horizon) > 1e-9:
        raise ValueError(f"horizon {sys.horizon} is not a multiple of dt {cfg.dt}")
    return n


def rollout_open_loop(
    sys: SwitchedSystem,
    x0: np.ndarray,
    u_seq: np.ndarray,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Integrate a fixed control sequence over the full horizon."""
    u_seq = _as_control_sequence(sys, u_seq)
    n = horizon_steps(sys, cfg)
    if u_seq.shape[0] != n:
        raise ValueError(f"expected {n} controls for horizon {sys.horizon}, got {u_seq.shape[0]}")
    return _rollout(sys, x0, lambda k, x, t: u_seq[k], None, cfg, n)


def rollout_policy(
    sys: SwitchedSystem,
    x0: np.ndarray,
    policy,
    noise,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Integrate a state-feedback policy ``u = policy(x, t) + noise(k)``."""
    n = horizon_steps(sys, cfg)

    def choose(k, x, t):
        u = np.atleast_1d(np.asarray(policy(x, t), dtype=float))
        if noise is not None:
            u = u + np.asarray(noise(k), dtype=float)
        return u

    return _rollout(sys, x0, choose, None, cfg, n)


def _rollout(sys, x0, choose, _unused, cfg, n) -> Trajectory:
    x = _check_finite("initial state", x0).copy()
    times = np.empty(n + 1)
    states = np.empty((n + 1, sys.n_x))
    controls = np.empty((n, sys.n_u))
    modes = np.empty(n, dtype=int)
    costs = np.empty(n)
    events: list[SwitchEvent] = []
    times[0] = 0.0
    states[0] = x
    total = 0.0
    for k in range(n):
        t = k * cfg.dt
        u = sys.clamp(_check_finite("control", choose(k, x, t)))
        mode = classify(sys, x)
        c = sys.mode(mode).cost.value(x, u) * cfg.dt
        try:
            x, ev = step_with_events(sys, x, u, t, cfg)
        except ZenoError as err:
            err.step_index = k
            raise
        events.extend(ev)
        times[k + 1] = (k + 1) * cfg.dt
        states[k + 1] = x
        controls[k] = u
        modes[k] = mode
        costs[k] = c
        total += c
    total += sys.terminal(x)
    return Trajectory(times, states, controls, modes, costs, events, total)


# ---------------------------------------------------------------------------
# Batched stepping for grid sweeps.  Restricted to linear-affine modes: the
# explicit step of a frozen linear field is a polynomial in the substep
# length, so crossing times for whole batches bisect in lockstep.


def _poly_coeffs(mode_dyn, X, U, scheme):
    """Taylor-like coefficients d_i with step(X, U, h) = sum_i h^i d_i."""
    A, B = mode_dyn.A, mode_dyn.B
    d1 = X @ A.T + U @ B.T
    coeffs = [X, d1]
    if scheme == "rk4":
        d = d1
        for i in (2, 3, 4):
            d = (d @ A.T) / i
            coeffs.append(d)
    return coeffs


def _poly_eval(coeffs, h):
    """Evaluate the per-row step polynomial at per-row substep lengths h."""
    out = coeffs[-1] * h[:, None]
    for c in coeffs[-2:0:-1]:
        out = (out + c) * h[:, None]
    return out + coeffs[0]


def step_batch(
    sys: SwitchedSystem,
    X: np.ndarray,
    U: np.ndarray,
    dt: float,
    cfg: IntegratorConfig,
    on_zeno: str = "raise",
) -> tuple[np.ndarray, np.ndarray, int]:
    """Event-aware step applied to every row of (X, U) at once.

    Semantics match `step_with_events` (same bisection rule, same
    tolerances); only the arithmetic is reorganized, so results agree to
    integration tolerance.  Requires linear-affine modes.

    Args:
        sys: system with linear-affine modes only.
        X: states, shape (m, n_x).
        U: controls, shape (m, n_u); clamped componentwise.
        dt: interval length (may differ from cfg.dt for grid sweeps).
        cfg: tolerance and scheme settings.
        on_zeno: "raise" propagates ZenoError; "truncate" freezes offending
            rows where they are and counts them; "chatter" finishes those
            rows with the active field held, as in the scalar stepper.

    Returns:
        ``(X_next, n_events, n_guarded)`` where the last entry counts rows
        that hit the Zeno guard (frozen or chattered through).
    """
    if not all(m.dynamics.is_linear for m in sys.modes):
        raise NotImplementedError("step_batch requires linear-affine modes")
    if on_zeno not in ("raise", "truncate", "chatter"):
        raise ValueError("on_zeno must be 'raise', 'truncate', or 'chatter'")
    X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
    lo, hi = sys.control_bounds
    U = np.clip(np.atleast_2d(np.asarray(U, dtype=float)), lo, hi)
    m = X.shape[0]
    gmat, goff = sys._gmat, sys._goff
    mode = classify_batch(sys, X)
    remaining = np.full(m, float(dt))
    n_events = np.zeros(m, dtype=int)
    active = np.ones(m, dtype=bool)
    truncated = 0
    tol = cfg.event_time_tol
    max_iters = (cfg.zeno_cap + 2) * (len(sys.boundaries) + 1) + 2

    for _ in range(max_iters):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        coeffs = [np.empty_like(X[rows]) for _ in range(5 if cfg.scheme == "rk4" else 2)]
        for q in np.unique(mode[rows]):
            sel = rows[mode[rows] == q]
            cs = _poly_coeffs(sys.mode(int(q)).dynamics, X[sel], U[sel], cfg.scheme)
            pos = np.searchsorted(rows, sel)
            for c_dst, c_src in zip(coeffs, cs):
                c_dst[pos] = c_src
        trial = _poly_eval(coeffs, remaining[rows])
        g0 = X[rows] @ gmat.T + goff
        g1 = trial @ gmat.T + goff
        crossed = ((g0 > 0) & (g1 < 0)) | ((g0 < 0) & (g1 > 0))
        any_cross = crossed.any(axis=1)
        done = rows[~any_cross]
        X[done] = trial[~any_cross]
        active[done] = False
        if not any_cross.any():
            break
        hit = np.flatnonzero(any_cross)  # positions within rows
        s_evt = remaining[rows][hit].copy()
        for b in range(gmat.shape[0]):
            pos = hit[crossed[hit, b]]
            if pos.size == 0:
                continue
            # e_i = g_b(d_i): the boundary value along the flow is a
            # polynomial in the substep length; bisect it per row.
            e = [c[pos] @ gmat[b] for c in coeffs]
            e[0] = e[0] + goff[b]
            start_pos = g0[pos, b] > 0
            blo = np.zeros(pos.size)
            bhi = remaining[rows][pos].copy()
            while np.max(bhi - blo) > tol:
                mid = 0.5 * (blo + bhi)
                gm = e[-1] * mid
                for c in e[-2:0:-1]:
                    gm = (gm + c) * mid
                gm += e[0]
                # Exactly-on-surface counts as near side, as in the scalar path.
                same = (gm == 0.0) | ((gm > 0.0) == start_pos)
                blo = np.where(same, mid, blo)
                bhi = np.where(same, bhi, mid)
            take = np.searchsorted(hit, pos)
            s_evt[take] = np.minimum(s_evt[take], bhi)
        rows_hit = rows[hit]
        X[rows_hit] = _poly_eval([c[hit] for c in coeffs], s_evt)
        remaining[rows_hit] -= s_evt
        new_mode = classify_batch(sys, X[rows_hit])
        changed = new_mode != mode[rows_hit]
        n_events[rows_hit[changed]] += 1
        mode[rows_hit] = new_mode
        over = rows_hit[n_events[rows_hit] > cfg.zeno_cap]
        if over.size:
            if on_zeno == "raise":
                raise ZenoError(float(dt - remaining[over[0]]), X[over[0]], int(n_events[over[0]]))
            if on_zeno == "chatter":
                X[over] = _chatter_finish(sys, X[over], U[over], mode[over], remaining[over], cfg)
            active[over] = False
            truncated += over.size
    else:
        stuck = np.flatnonzero(active)
        if stuck.size:
            if on_zeno == "raise":
                raise ZenoError(
                    float(dt - remaining[stuck[0]]), X[stuck[0]], int(n_events[stuck[0]])
                )
            if on_zeno == "chatter":
                X[stuck] = _chatter_finish(
                    sys, X[stuck], U[stuck], mode[stuck], remaining[stuck], cfg
                )
            truncated += stuck.size
    return X, n_events, truncated


def _chatter_finish(sys, X, U, mode, remaining, cfg):
    """Finish guard-tripped rows with one unmonitored leg of the active field."""
    out = X.copy()
    for q in np.unique(mode):
        sel = np.flatnonzero(mode == q)
        cs = _poly_coeffs(sys.mode(int(q)).dynamics, X[sel], U[sel], cfg.scheme)
        out[sel] = _poly_eval(cs, remaining[sel])
    return out
