"""Differential dynamic programming through the event-aware step map.

The discrete transition Phi(x, u) is the simulator step itself, so switching
surfaces are part of the model being linearized.  Jacobians come from
finite differences; when a state perturbation pair straddles a region
boundary the difference switches to one-sided so both samples stay on the
nominal side.  The backward pass regularizes Q_uu and the forward pass is a
backtracking line search that only ever accepts a cost decrease.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simulate import (
    IntegratorConfig,
    Trajectory,
    rollout_open_loop,
    rollout_policy,
    step_with_events,
)
from .systems import SwitchedSystem, classify


class NotPositiveDefiniteError(RuntimeError):
    """Q_uu + lambda*I failed its Cholesky factorization."""

    def __init__(self, step_index: int, lam: float):
        self.step_index = step_index
        self.lam = lam
        super().__init__(f"Quu not positive definite at step {step_index} (lambda={lam:g})")


@dataclass(frozen=True)
class DdpConfig:
    max_iters: int = 200
    tol: float = 1e-7
    fd_step: float = 1e-5
    reg_init: float = 1e-6
    reg_min: float = 1e-6
    reg_max: float = 1e6
    reg_up: float = 10.0
    reg_down: float = 0.5
    n_alphas: int = 11  # line search alphas 1, 1/2, ..., 2**-(n-1)

    def __post_init__(self) -> None:
        if not self.reg_min <= self.reg_init <= self.reg_max:
            raise ValueError("reg_init must lie within [reg_min, reg_max]")
        if self.reg_up <= 1.0 or not 0.0 < self.reg_down < 1.0:
            raise ValueError("reg schedule must grow on reject and shrink on accept")


@dataclass
class DdpSolution:
    trajectory: Trajectory
    controls: np.ndarray
    feedforward: np.ndarray   # k_t, shape (N, n_u)
    gains: np.ndarray         # K_t, shape (N, n_u, n_x)
    cost_history: list[float]
    iterations: int
    converged: bool


def _step_map(sys, x, u, t, cfg):
    x_next, _ = step_with_events(sys, x, u, t, cfg)
    return x_next


def linearize_step(
    sys: SwitchedSystem,
    x: np.ndarray,
    u: np.ndarray,
    t: float,
    int_cfg: IntegratorConfig,
    h: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference Jacobians (A, B) of the event-aware step at (x, u).

    State columns use central differences unless the two perturbed states
    classify into different modes; then the sample on the nominal side is
    kept and the difference becomes one-sided.  Control columns go
    one-sided at an active bound (the step clamps internally, which would
    zero out half of a centered difference).
    """
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_x, n_u = x.size, u.size
    home = classify(sys, x)
    A = np.empty((n_x, n_x))
    base = None
    for i in range(n_x):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        if classify(sys, xp) == classify(sys, xm):
            A[:, i] = (_step_map(sys, xp, u, t, int_cfg) - _step_map(sys, xm, u, t, int_cfg)) / (2 * h)
        else:
            if base is None:
                base = _step_map(sys, x, u, t, int_cfg)
            if classify(sys, xp) == home:
                A[:, i] = (_step_map(sys, xp, u, t, int_cfg) - base) / h
            else:
                A[:, i] = (base - _step_map(sys, xm, u, t, int_cfg)) / h
    lo, hi = sys.control_bounds
    Bm = np.empty((n_x, n_u))
    for j in range(n_u):
        up = u.copy(); up[j] += h
        um = u.copy(); um[j] -= h
        if up[j] <= hi[j] and um[j] >= lo[j]:
            Bm[:, j] = (_step_map(sys, x, up, t, int_cfg) - _step_map(sys, x, um, t, int_cfg)) / (2 * h)
        else:
            if base is None:
                base = _step_map(sys, x, u, t, int_cfg)
            if up[j] <= hi[j]:
                Bm[:, j] = (_step_map(sys, x, up, t, int_cfg) - base) / h
            else:
                Bm[:, j] = (base - _step_map(sys, x, um, t, int_cfg)) / h
    return A, Bm


@dataclass
class _StageQuadratics:
    lx: np.ndarray
    lu: np.ndarray
    lxx: np.ndarray
    luu: np.ndarray


def _cost_quadratics(sys, traj, dt) -> list[_StageQuadratics]:
    out = []
    for k in range(len(traj)):
        cost = sys.mode(int(traj.modes[k])).cost
        x, u = traj.states[k], traj.controls[k]
        out.append(
            _StageQuadratics(
                lx=2.0 * cost.scale * (cost.state_weight @ x) * dt,
                lu=2.0 * cost.scale * (cost.control_weight @ u) * dt,
                lxx=2.0 * cost.scale * cost.state_weight * dt,
                luu=2.0 * cost.scale * cost.control_weight * dt,
            )
        )
    return out


def backward_pass(
    A_seq: np.ndarray,
    B_seq: np.ndarray,
    quads: list[_StageQuadratics],
    lam: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Riccati-style sweep with regularized Q_uu.

    Args:
        A_seq, B_seq: step Jacobians, shapes (N, n_x, n_x) and (N, n_x, n_u).
        quads: per-step cost derivatives, already scaled by dt.
        lam: regularization added to Q_uu before factorization.

    Returns:
        ``(k_seq, K_seq, dV)`` where dV is the predicted cost change for a
        full (alpha=1) step, always <= 0.

    Raises:
        NotPositiveDefiniteError: regularized Q_uu is not PD at some step.
    """
    n = len(quads)
    n_x = A_seq.shape[1]
    n_u = B_seq.shape[2]
    Vx = np.zeros(n_x)
    Vxx = np.zeros((n_x, n_x))
    k_seq = np.empty((n, n_u))
    K_seq = np.empty((n, n_u, n_x))
    dv = 0.0
    for i in range(n - 1, -1, -1):
        A, B, q = A_seq[i], B_seq[i], quads[i]
        Qx = q.lx + A.T @ Vx
        Qu = q.lu + B.T @ Vx
        Qxx = q.lxx + A.T @ Vxx @ A
        Quu = q.luu + B.T @ Vxx @ B
        Qux = B.T @ Vxx @ A
        Quu_reg = Quu + lam * np.eye(n_u)
        try:
            chol = np.linalg.cholesky(Quu_reg)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(i, lam) from None
        rhs = np.column_stack([Qu[:, None], Qux])
        sol = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        k = -sol[:, 0]
        K = -sol[:, 1:]
        k_seq[i] = k
        K_seq[i] = K
        dv += k @ Qu + 0.5 * k @ Quu_reg @ k
        Vx = Qx + K.T @ Quu_reg @ k + K.T @ Qu + Qux.T @ k
        Vxx = Qxx + K.T @ Quu_reg @ K + K.T @ Qux + Qux.T @ K
        Vxx = 0.5 * (Vxx + Vxx.T)
    return k_seq, K_seq, dv


def forward_pass(
    sys: SwitchedSystem,
    nominal: Trajectory,
    k_seq: np.ndarray,
    K_seq: np.ndarray,
    alpha: float,
    int_cfg: IntegratorConfig,
) -> Trajectory:
    """Roll the updated policy ``u = u_bar + alpha k + K (x - x_bar)``."""
    xbar, ubar = nominal.states, nominal.controls
    counter = {"k": 0}

    def policy(x, t):
        k = counter["k"]
        counter["k"] += 1
        return ubar[k] + alpha * k_seq[k] + K_seq[k] @ (x - xbar[k])

    return rollout_policy(sys, xbar[0], policy, None, int_cfg)


def solve(
    sys: SwitchedSystem,
    x0: np.ndarray,
    cfg: DdpConfig = DdpConfig(),
    int_cfg: IntegratorConfig = IntegratorConfig(),
    u_init: np.ndarray | None = None,
) -> DdpSolution:
    """Iterate linearize / backward / line-searched forward to convergence.

    Starts from ``u_init`` (zeros by default).  Each iteration either
    accepts a strictly cheaper trajectory or inflates the regularizer; the
    run stops when an accepted step improves by less than ``cfg.tol``, or
    when the regularizer hits its ceiling with no acceptable step.
    """
    n = round(sys.horizon / int_cfg.dt)
    if u_init is None:
        u_init = np.zeros((n, sys.n_u))
    traj = rollout_open_loop(sys, x0, u_init, int_cfg)
    cost = traj.total_cost
    history = [cost]
    lam = cfg.reg_init
    alphas = [2.0 ** -i for i in range(cfg.n_alphas)]
    k_seq = np.zeros((n, sys.n_u))
    K_seq = np.zeros((n, sys.n_u, sys.n_x))
    converged = False
    iterations = 0

    for it in range(1, cfg.max_iters + 1):
        iterations = it
        A_seq = np.empty((n, sys.n_x, sys.n_x))
        B_seq = np.empty((n, sys.n_x, sys.n_u))
        for k in range(n):
            A_seq[k], B_seq[k] = linearize_step(
                sys, traj.states[k], traj.controls[k], k * int_cfg.dt, int_cfg, cfg.fd_step
            )
        quads = _cost_quadratics(sys, traj, int_cfg.dt)

        accepted = False
        while True:
            try:
                k_new, K_new, _ = backward_pass(A_seq, B_seq, quads, lam)
            except NotPositiveDefiniteError:
                lam *= cfg.reg_up
                if lam > cfg.reg_max:
                    break
                continue
            for alpha in alphas:
                cand = forward_pass(sys, traj, k_new, K_new, alpha, int_cfg)
                if cand.total_cost < cost:
                    traj = cand
                    improvement = cost - cand.total_cost
                    cost = cand.total_cost
                    k_seq, K_seq = k_new, K_new
                    lam = max(lam * cfg.reg_down, cfg.reg_min)
                    accepted = True
                    break
            if accepted:
                break
            lam *= cfg.reg_up
            if lam > cfg.reg_max:
                break
        history.append(cost)
        if not accepted:
            break
        if improvement < cfg.tol:
            converged = True
            break

    return DdpSolution(
        trajectory=traj,
        controls=traj.controls.copy(),
        feedforward=k_seq,
        gains=K_seq,
        cost_history=history,
        iterations=iterations,
        converged=converged,
    )
