"""Two-point boundary shooting for scalar two-mode switched problems.

Handles dx/dt = a_q x + b_q u with running cost (x^2 + u^2) / 2 and a
single switching level.  Along an extremal u = -b_q * lam, the costate
obeys dlam/dt = -x - a_q lam, and at an interface crossing the Hamiltonian
is continuous, which pins the costate jump up to a quadratic root choice;
the root closer to the incoming costate is taken.  Shooting finds the
initial costate that lands lam(t_f) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


class BracketError(ValueError):
    """The shooting residual has no sign change over the given bracket."""


class StructureError(RuntimeError):
    """An extremal crossed the interface more often than the solver supports."""


class InfeasibleJumpError(RuntimeError):
    """Hamiltonian continuity has no real costate solution at the crossing."""


@dataclass(frozen=True)
class ScalarMode:
    a: float
    b: float


@dataclass(frozen=True)
class HmpProblem:
    """dx/dt = a x + b u with `upper` active for x > threshold."""

    upper: ScalarMode
    lower: ScalarMode
    threshold: float = 1.0
    x0: float = 2.0
    t_f: float = 1.0

    def __post_init__(self) -> None:
        if self.x0 == self.threshold:
            raise ValueError("x0 must not start on the switching level")
        if self.t_f <= 0:
            raise ValueError("t_f must be positive")

    def mode_at(self, x: float) -> ScalarMode:
        return self.upper if x > self.threshold else self.lower


@dataclass
class ExtremalPath:
    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    controls: np.ndarray
    crossings: list[float] = field(default_factory=list)
    cost: float = 0.0


@dataclass
class HmpSolution:
    lam0: float
    cost: float
    tau: float | None
    lam_before: float | None
    lam_after: float | None
    u_before: float | None
    u_after: float | None
    path: ExtremalPath

    @property
    def control_jump(self) -> float:
        """|u(tau+) - u(tau-)|, zero when no crossing happened."""
        if self.tau is None:
            return 0.0
        return abs(self.u_after - self.u_before)


def hamiltonian(mode: ScalarMode, x: float, lam: float) -> tuple[float, float]:
    """Minimized Hamiltonian and minimizing control for one mode."""
    u = -mode.b * lam
    H = 0.5 * (x * x + u * u) + lam * (mode.a * x + mode.b * u)
    return H, u


def costate_jump(
    problem: HmpProblem, before: ScalarMode, after: ScalarMode, lam_minus: float
) -> float:
    """Costate just after a crossing, from Hamiltonian continuity.

    Continuity at x = threshold reduces to a quadratic in lam_plus; of the
    two real roots the one minimizing |lam_plus - lam_minus| is returned.
    When both modes coincide this yields lam_plus = lam_minus exactly.
    """
    s = problem.threshold
    # H(s, lam) = s^2/2 - b^2 lam^2 / 2 + a s lam per mode.
    c_before = -0.5 * before.b ** 2 * lam_minus ** 2 + before.a * s * lam_minus
    qa = 0.5 * after.b ** 2
    qb = -after.a * s
    qc = c_before
    if qa == 0.0:
        if qb == 0.0:
            raise InfeasibleJumpError("degenerate interface condition (b=0 and a*s=0)")
        return -qc / qb
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        raise InfeasibleJumpError(f"no real costate after crossing (discriminant {disc:g})")
    root = np.sqrt(disc)
    cands = ((-qb + root) / (2.0 * qa), (-qb - root) / (2.0 * qa))
    return min(cands, key=lambda lp: abs(lp - lam_minus))


def integrate_extremal(
    problem: HmpProblem,
    lam0: float,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    max_crossings: int = 2,
    samples_per_segment: int = 400,
) -> tuple[ExtremalPath, float]:
    """Integrate state, costate, and running cost forward from (x0, lam0).

    Uses an adaptive Runge-Kutta pair with event localization at the
    switching level; each crossing applies the costate jump and flips the
    active mode.  Returns the sampled path (with accumulated cost) and
    lam(t_f).

    Raises:
        StructureError: more than ``max_crossings`` interface crossings.
    """
    s = problem.threshold
    mode = problem.mode_at(problem.x0)
    t = 0.0
    y = np.array([problem.x0, lam0, 0.0])
    times, states, costates, controls = [], [], [], []
    crossings: list[float] = []
    sample = samples_per_segment > 0

    def rhs(mode):
        a, b = mode.a, mode.b

        def f(t, y):
            x, lam, _ = y
            u = -b * lam
            return (a * x + b * u, -x - a * lam, 0.5 * (x * x + u * u))

        return f

    def hit(t, y):
        return y[0] - s

    hit.terminal = True

    while t < problem.t_f:
        sol = solve_ivp(
            rhs(mode), (t, problem.t_f), y, method="RK45",
            rtol=rtol, atol=atol, dense_output=sample, events=hit,
        )
        if not sol.success:
            raise RuntimeError(f"extremal integration failed: {sol.message}")
        seg_end = sol.t[-1]
        if sample:
            ts = np.linspace(t, seg_end, samples_per_segment, endpoint=False)
            ys = sol.sol(ts)
            times.append(ts)
            states.append(ys[0])
            costates.append(ys[1])
            controls.append(-mode.b * ys[1])
        y = sol.y[:, -1].copy()
        t = seg_end
        if sol.status == 1:  # interface hit
            if len(crossings) >= max_crossings:
                raise StructureError(
                    f"extremal crossed the interface more than {max_crossings} times"
                )
            crossings.append(t)
            new_mode = problem.lower if mode is problem.upper else problem.upper
            y[0] = s
            y[1] = costate_jump(problem, mode, new_mode, y[1])
            mode = new_mode
            # Restart a hair off the surface so the next event search sees a
            # clean sign; the offset is far below the integration tolerance.
            y[0] += -1e-13 if mode is problem.lower else 1e-13
        else:
            break

    times.append(np.array([problem.t_f]))
    states.append(np.array([y[0]]))
    costates.append(np.array([y[1]]))
    controls.append(np.array([-mode.b * y[1]]))
    path = ExtremalPath(
        np.concatenate(times),
        np.concatenate(states),
        np.concatenate(costates),
        np.concatenate(controls),
        crossings,
        cost=float(y[2]),
    )
    return path, float(y[1])


def _terminal_costate(problem, lam0, rtol: float = 1e-10) -> float:
    _, lam_tf = integrate_extremal(problem, lam0, rtol=rtol, samples_per_segment=0)
    return lam_tf


def find_brackets(
    problem: HmpProblem, lo: float, hi: float, n: int = 40, depth: int = 2
) -> list[tuple[float, float]]:
    """All sign-change brackets of the transversality residual on [lo, hi].

    The residual lam(t_f; lam0) can have several roots: extremals that
    never reach the interface coexist with extremals that cross it, and
    only cost comparison picks the optimal one.  Intervals where the
    residual is undefined (infeasible costate jump, too many crossings)
    are rescanned at finer resolution up to ``depth`` times, since roots
    often hide right next to such a zone.
    """

    def value(lam: float) -> float | None:
        try:
            # Loose tolerance: the scan only needs reliable signs, the
            # root itself is re-polished at full precision by shoot().
            return _terminal_costate(problem, lam, rtol=1e-8)
        except (StructureError, InfeasibleJumpError):
            return None

    brackets: list[tuple[float, float]] = []

    def scan(a: float, b: float, m: int, level: int) -> None:
        grid = np.linspace(a, b, m)
        vals = [value(g) for g in grid]
        for g0, g1, v0, v1 in zip(grid, grid[1:], vals, vals[1:]):
            if v0 is not None and v1 is not None:
                if np.sign(v0) != np.sign(v1):
                    brackets.append((float(g0), float(g1)))
            elif level > 0:
                scan(g0, g1, 11, level - 1)

    scan(lo, hi, n, depth)
    return brackets


def find_bracket(problem: HmpProblem, lo: float, hi: float, n: int = 40) -> tuple[float, float]:
    """First sign-change bracket of the transversality residual on [lo, hi]."""
    brackets = find_brackets(problem, lo, hi, n)
    if not brackets:
        raise BracketError(f"no sign change of lam(t_f) for lam0 in [{lo}, {hi}]")
    return brackets[0]


def shoot(
    problem: HmpProblem,
    bracket: tuple[float, float],
    residual_tol: float = 1e-9,
) -> HmpSolution:
    """Find the extremal satisfying the terminal condition lam(t_f) = 0.

    The root of the shooting residual is isolated by the caller-supplied
    bracket and polished by Brent's method (bracketed bisection with a
    secant/inverse-quadratic accelerator).

    Raises:
        BracketError: the bracket endpoints do not straddle a root.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    f_lo = _terminal_costate(problem, lo)
    f_hi = _terminal_costate(problem, hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"residuals at bracket ends have the same sign: "
            f"f({lo:g})={f_lo:g}, f({hi:g})={f_hi:g}"
        )
    lam0 = brentq(
        lambda lam: _terminal_costate(problem, lam), lo, hi, xtol=1e-14, maxiter=200
    )
    path, lam_tf = integrate_extremal(problem, lam0)
    if abs(lam_tf) > residual_tol:
        raise RuntimeError(f"shooting stalled: |lam(t_f)| = {abs(lam_tf):g}")
    if path.crossings:
        tau = path.crossings[0]
        mode_before = problem.mode_at(problem.x0)
        mode_after = problem.lower if mode_before is problem.upper else problem.upper
        lam_before = _costate_at(problem, lam0, tau, mode_before)
        lam_after = costate_jump(problem, mode_before, mode_after, lam_before)
        u_before = -mode_before.b * lam_before
        u_after = -mode_after.b * lam_after
    else:
        tau = lam_before = lam_after = u_before = u_after = None
    return HmpSolution(
        lam0=float(lam0),
        cost=path.cost,
        tau=tau,
        lam_before=lam_before,
        lam_after=lam_after,
        u_before=u_before,
        u_after=u_after,
        path=path,
    )


def _costate_at(problem, lam0, tau, mode) -> float:
    """Costate just before tau, from re-integrating the first arc alone."""

    def f(t, y):
        x, lam = y
        return (mode.a * x - mode.b ** 2 * lam, -x - mode.a * lam)

    sol = solve_ivp(
        f, (0.0, tau), [problem.x0, lam0], method="RK45", rtol=1e-12, atol=1e-12
    )
    return float(sol.y[1, -1])


def solve_best(
    problem: HmpProblem,
    lo: float = -20.0,
    hi: float = 20.0,
    n: int = 81,
) -> HmpSolution:
    """Shoot every bracket on the scan range, return the cheapest extremal.

    Raises:
        BracketError: the scan found no sign change at all.
    """
    brackets = find_brackets(problem, lo, hi, n)
    if not brackets:
        raise BracketError(f"no sign change of lam(t_f) for lam0 in [{lo}, {hi}]")
    best: HmpSolution | None = None
    for bracket in brackets:
        try:
            sol = shoot(problem, bracket)
        except (StructureError, InfeasibleJumpError, RuntimeError):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise BracketError("every bracket failed to produce an extremal")
    return best


def problem_for_env(name: str) -> HmpProblem:
    """Shooting problems matching the scalar benchmark environments."""
    if name == "analytic1":
        return HmpProblem(upper=ScalarMode(0.0, 2.0), lower=ScalarMode(0.0, 1.0))
    if name == "analytic2":
        return HmpProblem(upper=ScalarMode(2.0, 1.0), lower=ScalarMode(-1.0, 1.0))
    raise KeyError(f"no shooting formulation for env {name!r}")
