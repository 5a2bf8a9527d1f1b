"""Reference implementations the tests trust.

Everything in this module is built independently of the package: plain
textbook recursions, closed-form matrix series, and scipy integrators.
Tests compare switchopt outputs against these values, never the reverse,
so a bug in the package cannot silently validate itself.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm


def euler_affine_step(A, B, x, u, dt):
    """One explicit Euler step of dx/dt = A x + B u with u held constant."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return x + dt * (A @ x + B @ u)


def rk4_affine_step(A, B, x, u, dt):
    """One classical fourth-order Runge-Kutta step of dx/dt = A x + B u."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    u = np.atleast_1d(np.asarray(u, dtype=float))

    def f(y):
        return A @ y + B @ u

    x = np.asarray(x, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def exact_affine_step(A, B, x, u, dt):
    """Exact flow of dx/dt = A x + B u over dt via the augmented exponential."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    z = np.concatenate([np.asarray(x, dtype=float), np.atleast_1d(u)])
    return (expm(M * dt) @ z)[:n]


def rk4_discrete_pair(A, B, dt):
    """Closed-form (Ad, Bd) of one RK4 step on dx/dt = A x + B u, u frozen.

    RK4 applied to an affine field reproduces the Taylor expansion through
    fourth order: Ad = sum_{i=0..4} (A dt)^i / i!, and the forced part is
    Bd = (sum_{i=1..4} A^{i-1} dt^i / i!) B.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B2 = np.asarray(B, dtype=float).reshape(n, -1)
    Ad = np.eye(n)
    S = np.zeros((n, n))
    Apow = np.eye(n)
    fact = 1.0
    for i in range(1, 5):
        fact *= i
        S = S + Apow * (dt ** i) / fact
        Apow = Apow @ A
        Ad = Ad + Apow * (dt ** i) / fact
    return Ad, S @ B2


def euler_discrete_pair(A, B, dt):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B2 = np.asarray(B, dtype=float).reshape(n, -1)
    return np.eye(n) + dt * A, dt * B2


def lqr_backward(Ad, Bd, Q, R, Qf, n_steps):
    """Finite-horizon discrete LQR recursion.

    Cost convention: J = sum_k (x_k' Q x_k + u_k' R u_k) + x_N' Qf x_N with
    u_k = -K_k x_k; the weights are expected to already carry any dt factor.
    Returns the gain list [K_0 .. K_{N-1}] and value matrices [P_0 .. P_N].
    """
    Ad = np.asarray(Ad, dtype=float)
    Bd = np.asarray(Bd, dtype=float)
    P = np.asarray(Qf, dtype=float).copy()
    gains = []
    values = [P]
    for _ in range(n_steps):
        H = R + Bd.T @ P @ Bd
        K = np.linalg.solve(H, Bd.T @ P @ Ad)
        P = Q + K.T @ R @ K + (Ad - Bd @ K).T @ P @ (Ad - Bd @ K)
        P = 0.5 * (P + P.T)
        gains.append(K)
        values.append(P)
    gains.reverse()
    values.reverse()
    return gains, values


def lqr_closed_loop_cost(Ad, Bd, gains, Q, R, Qf, x0):
    """Simulate u_k = -K_k x_k on the discrete model and accumulate the cost."""
    x = np.asarray(x0, dtype=float).copy()
    J = 0.0
    for K in gains:
        u = -K @ x
        J += x @ Q @ x + u @ R @ u
        x = Ad @ x + Bd @ u
    return J + x @ Qf @ x, x


def scalar_riccati_value(a, b, q, r, t_f, x0, p_f=0.0, rtol=1e-11):
    """Finite-horizon scalar LQR value via the Riccati ODE.

    For dx/dt = a x + b u and J = int 0.5 (q x^2 + r u^2) dt + 0.5 p_f x(T)^2
    the value function is V(x, t) = 0.5 p(t) x^2 with
    dp/dt = -(2 a p - b^2 p^2 / r + q), p(T) = p_f.  Integrates backward in
    the substitution s = T - t and returns (V(x0, 0), p(0)).
    """

    def rhs(_s, p):
        return 2.0 * a * p[0] - (b * p[0]) ** 2 / r + q

    sol = solve_ivp(rhs, (0.0, t_f), [p_f], rtol=rtol, atol=1e-13)
    p0 = float(sol.y[0, -1])
    return 0.5 * p0 * x0 * x0, p0


def scalar_lqr_trajectory(a, b, q, r, t_f, x0, n_samples=2001):
    """Optimal state/control samples for the scalar LQR problem above.

    Solves the Riccati ODE densely, then integrates the closed loop
    dx/dt = (a - b^2 p(t) / r) x forward.  Returns (times, x, u).
    """

    def riccati(_s, p):
        return 2.0 * a * p[0] - (b * p[0]) ** 2 / r + q

    back = solve_ivp(
        riccati, (0.0, t_f), [0.0], rtol=1e-11, atol=1e-13, dense_output=True
    )

    def p_at(t):
        return back.sol(t_f - t)[0]

    def closed(t, x):
        return (a - b * b * p_at(t) / r) * x[0]

    ts = np.linspace(0.0, t_f, n_samples)
    fwd = solve_ivp(
        closed, (0.0, t_f), [x0], t_eval=ts, rtol=1e-11, atol=1e-13
    )
    xs = fwd.y[0]
    us = np.array([-b * p_at(t) / r * x for t, x in zip(ts, xs)])
    return ts, xs, us
