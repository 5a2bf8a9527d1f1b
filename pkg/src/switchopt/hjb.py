"""Semi-Lagrangian value iteration on a state grid, as a ground-truth oracle.

Backward induction computes V(x, t_k) = min_u [ L(x, u) dt + V(Phi(x, u),
t_{k+1}) ] over a finite control sample set, where Phi is the same
event-aware step the simulator uses, and off-grid values come from
multilinear interpolation clamped at the box edges.  Because the dynamics
are time-invariant, the (x, u) -> Phi(x, u) table is computed once and
reused across layers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .simulate import IntegratorConfig, SwitchEvent, Trajectory, step_batch, step_with_events
from .systems import (
    AffineBoundary,
    SwitchedSystem,
    classify,
    classify_batch,
    stage_cost_batch,
)

TABLE_MAGIC = b"SWOPT-VT-1\n"


class DomainEscapeError(RuntimeError):
    """A greedy rollout left the value grid by more than one cell."""

    def __init__(self, step_index: int, state):
        self.step_index = step_index
        self.state = np.asarray(state, dtype=float)
        super().__init__(f"trajectory left the grid box at step {step_index}: {self.state}")


@dataclass(frozen=True)
class GridSpec:
    """Uniform box grid plus time layers and the control sample set."""

    lo: np.ndarray
    hi: np.ndarray
    shape: tuple[int, ...]
    nt: int
    controls: np.ndarray

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        controls = np.asarray(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls[:, None]
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "controls", controls)
        if lo.size != hi.size or lo.size != len(self.shape):
            raise ValueError("lo, hi, and shape must agree on the dimension")
        if np.any(hi <= lo):
            raise ValueError("grid box must have positive extent")
        if any(s < 2 for s in self.shape):
            raise ValueError("need at least two points per axis")
        if self.nt < 0:
            raise ValueError("nt must be nonnegative")
        if controls.shape[0] < 1:
            raise ValueError("need at least one control sample")

    @classmethod
    def uniform(cls, lo, hi, shape, nt, u_lo, u_hi, n_controls: int) -> "GridSpec":
        """Axis-aligned grid with a linspace control set (1-D control)."""
        controls = np.linspace(float(u_lo), float(u_hi), int(n_controls))
        return cls(lo, hi, tuple(np.atleast_1d(shape).astype(int)), nt, controls)

    @property
    def n_dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.shape) - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(self.lo[i], self.hi[i], self.shape[i]) for i in range(self.n_dim)]

    def nodes(self) -> np.ndarray:
        """All grid points, C-order flattened, shape (prod(shape), n_dim)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _interp_flat(grid: GridSpec, values: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of one value layer, clamped at the box."""
    if grid.n_dim == 1:
        return np.interp(X[:, 0], np.linspace(grid.lo[0], grid.hi[0], grid.shape[0]), values)
    V = values.reshape(grid.shape)
    h = grid.spacing
    rel = (X - grid.lo) / h
    idx0 = []
    frac = []
    for d in range(grid.n_dim):
        i = np.clip(np.floor(rel[:, d]).astype(int), 0, grid.shape[d] - 2)
        idx0.append(i)
        frac.append(np.clip(rel[:, d] - i, 0.0, 1.0))
    if grid.n_dim == 2:
        i, j = idx0
        fx, fy = frac
        v00 = V[i, j]
        v10 = V[i + 1, j]
        v01 = V[i, j + 1]
        v11 = V[i + 1, j + 1]
        return (
            v00 * (1 - fx) * (1 - fy)
            + v10 * fx * (1 - fy)
            + v01 * (1 - fx) * fy
            + v11 * fx * fy
        )
    raise NotImplementedError("interpolation implemented for 1-D and 2-D grids")


@dataclass
class ValueTable:
    """Value layers over a GridSpec; ``values[k]`` is the layer at t_k."""

    grid: GridSpec
    t_f: float
    values: np.ndarray  # (nt + 1, prod(shape))
    escaped: int = 0
    zeno_truncated: int = 0

    @property
    def dt(self) -> float:
        return self.t_f / self.grid.nt if self.grid.nt else 0.0

    def value_at(self, x, t_index: int) -> float:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        return float(_interp_flat(self.grid, self.values[t_index], X)[0])

    def save(self, path) -> None:
        grid = self.grid
        header = json.dumps(
            {
                "lo": grid.lo.tolist(),
                "hi": grid.hi.tolist(),
                "shape": list(grid.shape),
                "nt": grid.nt,
                "n_controls": int(grid.controls.shape[0]),
                "n_u": int(grid.controls.shape[1]),
                "t_f": self.t_f,
                "escaped": self.escaped,
                "zeno_truncated": self.zeno_truncated,
            },
            sort_keys=True,
        ).encode()
        with open(path, "wb") as fh:
            fh.write(TABLE_MAGIC)
            fh.write(len(header).to_bytes(8, "big"))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.grid.controls, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ValueTable":
        with open(path, "rb") as fh:
            magic = fh.read(len(TABLE_MAGIC))
            if magic != TABLE_MAGIC:
                raise ValueError(f"not a value-table file (bad magic {magic!r})")
            meta = json.loads(fh.read(int.from_bytes(fh.read(8), "big")).decode())
            n_c, n_u = meta["n_controls"], meta["n_u"]
            controls = np.frombuffer(fh.read(8 * n_c * n_u), dtype="<f8").reshape(n_c, n_u)
            grid = GridSpec(meta["lo"], meta["hi"], tuple(meta["shape"]), meta["nt"], controls)
            n_pts = int(np.prod(grid.shape))
            values = np.frombuffer(fh.read(8 * (grid.nt + 1) * n_pts), dtype="<f8")
            values = values.reshape(grid.nt + 1, n_pts).copy()
        return cls(grid, meta["t_f"], values, meta["escaped"], meta["zeno_truncated"])

    def slice_to_csv(self, path, t_index: int = 0) -> None:
        """Write one 1-D layer as (x, value) rows."""
        if self.grid.n_dim != 1:
            raise ValueError("CSV slices are for 1-D grids")
        xs = self.grid.axes()[0]
        layer = self.values[t_index]
        with open(path, "w", newline="") as fh:
            fh.write("x,value\n")
            for x, v in zip(xs, layer):
                fh.write(f"{float(x)!r},{float(v)!r}\n")


def _event_cfg(base: IntegratorConfig, dt: float) -> IntegratorConfig:
    return IntegratorConfig(
        dt=dt,
        scheme=base.scheme,
        event_time_tol=min(base.event_time_tol, dt * 1e-6),
        zeno_cap=base.zeno_cap,
        on_zeno=base.on_zeno,
    )


def solve_backward(
    sys: SwitchedSystem,
    grid: GridSpec,
    int_cfg: IntegratorConfig = IntegratorConfig(),
) -> ValueTable:
    """Backward induction over the grid; returns the full value table.

    ``int_cfg`` contributes the scheme and tolerances; the step length is
    ``horizon / nt``.  Escapes (one-step images leaving the box) are
    counted, not fatal: their values clamp to the box edge.
    """
    nodes = grid.nodes()
    n_pts = nodes.shape[0]
    n_ctl = grid.controls.shape[0]
    if grid.nt == 0:
        term = np.array([sys.terminal(x) for x in nodes]) if sys.terminal_cost else np.zeros(n_pts)
        return ValueTable(grid, sys.horizon, term[None, :].copy())
    dt = sys.horizon / grid.nt
    cfg = _event_cfg(int_cfg, dt)

    X = np.repeat(nodes, n_ctl, axis=0)
    U = np.tile(grid.controls, (n_pts, 1))
    stage = stage_cost_batch(sys, X, U) * dt
    X_next, _, truncated = step_batch(sys, X, U, dt, cfg, on_zeno="truncate")
    escaped = int(np.count_nonzero(np.any((X_next < grid.lo) | (X_next > grid.hi), axis=1)))

    values = np.empty((grid.nt + 1, n_pts))
    if sys.terminal_cost is None:
        values[grid.nt] = 0.0
    else:
        values[grid.nt] = np.array([sys.terminal(x) for x in nodes])
    for k in range(grid.nt - 1, -1, -1):
        cont = _interp_flat(grid, values[k + 1], X_next)
        values[k] = (stage + cont).reshape(n_pts, n_ctl).min(axis=1)
    return ValueTable(grid, sys.horizon, values, escaped, truncated)


def greedy_policy_eval(
    table: ValueTable,
    sys: SwitchedSystem,
    x0,
    int_cfg: IntegratorConfig = IntegratorConfig(),
) -> tuple[Trajectory, float]:
    """Roll out the argmin policy of the table from x0.

    At each step every control sample is scored with the same expression
    the backup minimized; ties break toward smaller |u|, then smaller u.
    The state advances through the scalar event-aware step so the returned
    trajectory carries switch events.

    Raises:
        DomainEscapeError: the rollout left the grid box by more than one
            cell; values there would be extrapolations.
    """
    grid = table.grid
    nt = grid.nt
    dt = table.dt if nt else 0.0
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n_ctl = grid.controls.shape[0]
    cfg = _event_cfg(int_cfg, dt) if nt else None

    times = np.empty(nt + 1)
    states = np.empty((nt + 1, sys.n_x))
    controls = np.empty((nt, sys.n_u))
    modes = np.empty(nt, dtype=int)
    costs = np.empty(nt)
    events: list[SwitchEvent] = []
    times[0] = 0.0
    states[0] = x
    total = 0.0
    u_abs = np.linalg.norm(grid.controls, axis=1)
    u_first = grid.controls[:, 0]
    for k in range(nt):
        Xc = np.tile(x, (n_ctl, 1))
        Xn, _, _ = step_batch(sys, Xc, grid.controls, dt, cfg, on_zeno="truncate")
        stage = stage_cost_batch(sys, Xc, grid.controls) * dt
        score = stage + _interp_flat(grid, table.values[k + 1], Xn)
        j = int(np.lexsort((u_first, u_abs, score))[0])
        u = grid.controls[j]
        mode = classify(sys, x)
        total += stage[j]
        x, ev = step_with_events(sys, x, u, k * dt, cfg)
        events.extend(ev)
        cell = grid.spacing
        if np.any(x < grid.lo - cell) or np.any(x > grid.hi + cell):
            raise DomainEscapeError(k, x)
        times[k + 1] = (k + 1) * dt
        states[k + 1] = x
        controls[k] = u
        modes[k] = mode
        costs[k] = stage[j]
    total += sys.terminal(x)
    traj = Trajectory(times, states, controls, modes, costs, events, total)
    return traj, total


@dataclass
class ProbeResult:
    """Per-layer value gaps across a switching surface."""

    max_jump: float
    jumps: np.ndarray        # (nt + 1,) max |V(s-) - V(s+)| per layer
    slope_low: np.ndarray    # one-sided difference quotients, low side
    slope_high: np.ndarray
    offset: float


def interface_continuity_probe(
    table: ValueTable,
    boundary: AffineBoundary,
    n_line_samples: int = 33,
) -> ProbeResult:
    """Measure the value gap across a boundary, one cell off each side.

    For every time layer, V is interpolated at probe pairs straddling the
    surface at one-cell offset along the boundary normal; the jump is the
    largest |difference| over the probe pairs.  The one-sided difference
    quotients quantify the kink in the spatial gradient.
    """
    grid = table.grid
    normal = boundary.normal / np.linalg.norm(boundary.normal)
    offset = float(np.min(grid.spacing))
    if grid.n_dim == 1:
        s = -boundary.offset / boundary.normal[0]
        if not grid.lo[0] < s < grid.hi[0]:
            raise ValueError("boundary lies outside the grid box")
        pts = np.array([[s]])
    else:
        # Sample the line inside the box, keeping probe points interior.
        base = -boundary.offset * boundary.normal / float(boundary.normal @ boundary.normal)
        d = np.array([-normal[1], normal[0]])
        t_lo, t_hi = -np.inf, np.inf
        for i in range(grid.n_dim):
            if abs(d[i]) < 1e-15:
                continue
            c1 = (grid.lo[i] + offset - base[i]) / d[i]
            c2 = (grid.hi[i] - offset - base[i]) / d[i]
            t_lo = max(t_lo, min(c1, c2))
            t_hi = min(t_hi, max(c1, c2))
        if not t_lo < t_hi:
            raise ValueError("boundary does not cross the grid box interior")
        ts = np.linspace(t_lo, t_hi, n_line_samples)
        pts = base + ts[:, None] * d
    low = pts - offset * normal
    high = pts + offset * normal
    on = pts
    nt = grid.nt
    jumps = np.empty(nt + 1)
    slope_low = np.empty(nt + 1)
    slope_high = np.empty(nt + 1)
    for k in range(nt + 1):
        v_low = _interp_flat(grid, table.values[k], low)
        v_high = _interp_flat(grid, table.values[k], high)
        v_on = _interp_flat(grid, table.values[k], on)
        gaps = np.abs(v_low - v_high)
        worst = int(np.argmax(gaps))
        jumps[k] = gaps[worst]
        slope_low[k] = (v_on[worst] - v_low[worst]) / offset
        slope_high[k] = (v_high[worst] - v_on[worst]) / offset
    return ProbeResult(float(jumps.max()), jumps, slope_low, slope_high, offset)


def bellman_residual_stat(
    table: ValueTable,
    sys: SwitchedSystem,
    exclude_radius: float,
) -> float:
    """Max |min_u [L + (V(x + f dt, t+dt) - V(x, t)) / dt]| at smooth nodes.

    The drift uses a plain Euler displacement, so the statistic measures
    how well the table satisfies the continuous-time optimality equation
    rather than echoing the scheme's own backup.  Nodes within
    ``exclude_radius`` of any switching surface, and the outermost cell
    ring, are skipped.
    """
    grid = table.grid
    nodes = grid.nodes()
    margin = grid.spacing
    interior = np.all((nodes >= grid.lo + margin) & (nodes <= grid.hi - margin), axis=1)
    if len(sys.boundaries):
        g = np.abs(nodes @ sys._gmat.T + sys._goff)
        norms = np.linalg.norm(sys._gmat, axis=1)
        interior &= np.all(g / norms > exclude_radius, axis=1)
    pts = nodes[interior]
    if pts.size == 0:
        raise ValueError("no interior nodes left after exclusions")
    n_ctl = grid.controls.shape[0]
    dt = table.dt
    X = np.repeat(pts, n_ctl, axis=0)
    U = np.tile(grid.controls, (pts.shape[0], 1))
    stage = stage_cost_batch(sys, X, U)
    ids = np.repeat(np.arange(pts.shape[0]), n_ctl)
    drift = np.empty_like(X)
    mode_ids = classify_batch(sys, X)
    for mode in sys.modes:
        sel = mode_ids == mode.region.mode_id
        if sel.any():
            drift[sel] = X[sel] @ mode.dynamics.A.T + U[sel] @ mode.dynamics.B.T
    X_e = X + drift * dt
    worst = 0.0
    for k in range(grid.nt):
        v_next = _interp_flat(grid, table.values[k + 1], X_e)
        q = stage + (v_next - table.values[k][interior][ids]) / dt
        resid = np.abs(np.minimum.reduceat(q, np.arange(0, q.size, n_ctl)))
        worst = max(worst, float(resid.max()))
    return worst
