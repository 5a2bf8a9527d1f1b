#!/usr/bin/env python3
"""Small tour of the toolkit: one run of each solver, under a minute.

Prints the switching structure found by the shooting method on the two
scalar benchmarks, a trajectory-optimization result, a coarse grid value,
and a short policy-gradient training run. Nothing is written to disk.
"""

import time

import numpy as np

from switchopt.ddp import DdpConfig, solve
from switchopt.ddpg import DdpgConfig, final_k_mean, train
from switchopt.envs import make_env
from switchopt.hjb import GridSpec, interface_continuity_probe, solve_backward
from switchopt.hmp import problem_for_env, solve_best


def banner(text: str) -> None:
    print(f"\n=== {text} ===")


def main() -> None:
    banner("minimum-principle shooting (scalar benchmarks)")
    for name in ("analytic1", "analytic2"):
        t0 = time.time()
        sol = solve_best(problem_for_env(name), -20.0, 20.0, 81)
        print(
            f"{name}: switch at t={sol.tau:.4f}, cost J={sol.cost:.4f}, "
            f"control jump {sol.control_jump:.4f} ({time.time() - t0:.2f}s)"
        )

    banner("trajectory optimization (iterative LQR with events)")
    env = make_env("analytic2")
    t0 = time.time()
    ddp_sol = solve(env.system, env.x0, DdpConfig(), env.integrator)
    print(
        f"analytic2: J={ddp_sol.trajectory.total_cost:.4f} after "
        f"{ddp_sol.iterations} accepted iterations ({time.time() - t0:.2f}s)"
    )

    banner("grid value function (coarse, for speed)")
    env = make_env("analytic1")
    grid = GridSpec.uniform([-1.0], [4.0], [401], 100, -10.0, 10.0, 201)
    t0 = time.time()
    table = solve_backward(env.system, grid, env.integrator)
    v0 = table.value_at(env.x0, 0)
    jump = max(
        interface_continuity_probe(table, b).max_jump for b in env.system.boundaries
    )
    print(
        f"analytic1: V(x0, 0)={v0:.4f} (shooting found 1.0209), "
        f"worst interface jump {jump:.2e} ({time.time() - t0:.2f}s)"
    )

    banner("actor-critic training (short run)")
    env = make_env("analytic1")
    cfg = DdpgConfig(episodes=25, width=32, warmup=500, seed=0)
    t0 = time.time()
    _, curve = train(env, cfg)
    ec = curve.eval_costs
    print(
        f"analytic1: eval cost {ec[0]:.3f} -> {ec[-1]:.3f} over {cfg.episodes} "
        f"episodes, final-5 mean {final_k_mean(ec, 5):.3f} ({time.time() - t0:.1f}s)"
    )
    print("  eval curve:", np.array2string(ec[::5], precision=2))


if __name__ == "__main__":
    main()
