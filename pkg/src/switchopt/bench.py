"""Experiment harness: multi-seed runs, statistics, artifacts, reports.

A run is described by an ExperimentConfig (env, method, seeds, optional
method-specific blocks), dispatches one deterministic job per seed, and
writes everything under one output directory:

    out/
      summary.json          sorted-keys run summary
      seed-<n>/...          per-seed artifacts (CSV, checkpoints, JSON)
      phase.svg control.svg costs.svg

Summaries from separate runs feed ``compare_report`` and the acceptance
band checks.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import plots
from .ddp import DdpConfig
from .ddp import solve as ddp_solve
from .ddpg import DdpgConfig, best_k_mean, evaluate, final_k_mean, train
from .envs import ENV_MAKERS, make_env
from .hjb import GridSpec, greedy_policy_eval, interface_continuity_probe, solve_backward
from .hmp import problem_for_env, solve_best
from .nets import save_checkpoint
from .simulate import Trajectory, rollout_open_loop

METHODS = ("openloop", "ddp", "ddpg", "hmp", "hjb")

#: Default output root when --out is not given; overridden by this
#: environment variable.
OUTPUT_ROOT_VAR = "SWITCHOPT_RESULTS"


@dataclasses.dataclass(frozen=True)
class Band:
    """Acceptance interval for the mean of one statistic of a run."""

    lo: float
    hi: float
    stat: str = "cost"          # "cost" | "best10"
    target: float | None = None  # headline value the interval brackets
    tau: tuple[float, float] | None = None  # switching-time window (hmp)


#: (env, method) -> acceptance band. Targets are the benchmark headline
#: numbers; widths are review policy, not measurements.
BANDS: dict[tuple[str, str], Band] = {
    ("ex1", "ddp"): Band(23.2389 * 0.95, 23.2389 * 1.05, target=23.2389),
    ("ex2", "ddp"): Band(77.3122 * 0.95, 77.3122 * 1.05, target=77.3122),
    ("ex3", "ddp"): Band(38.2408 * 0.95, 38.2408 * 1.05, target=38.2408),
    ("ex1", "ddpg"): Band(20.0, 26.0, stat="best10", target=22.3045),
    ("ex2", "ddpg"): Band(-np.inf, 72.0, target=63.9893),
    ("ex3", "ddpg"): Band(37.0, 44.0, target=39.5031),
    ("analytic1", "hmp"): Band(1.0209 - 1e-3, 1.0209 + 1e-3, target=1.0209,
                               tau=(0.4694 - 1e-3, 0.4694 + 1e-3)),
    ("analytic2", "hmp"): Band(6.5274 - 1e-3, 6.5274 + 1e-3, target=6.5274,
                               tau=(0.3132 - 1e-3, 0.3132 + 1e-3)),
    ("analytic1", "hjb"): Band(1.0209 * 0.98, 1.0209 * 1.02, target=1.0209),
}


@dataclasses.dataclass
class ExperimentConfig:
    """One experiment: env, method, seeds, and per-method option blocks."""

    env: str
    method: str
    seeds: tuple[int, ...] = (0,)
    dt: float | None = None
    out: str | None = None
    episodes: int | None = None
    workers: int = 1
    ddpg: dict = dataclasses.field(default_factory=dict)
    ddp: dict = dataclasses.field(default_factory=dict)
    hjb: dict = dataclasses.field(default_factory=dict)
    hmp: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.env not in ENV_MAKERS:
            raise ValueError(f"unknown env {self.env!r}; have {sorted(ENV_MAKERS)}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; have {list(METHODS)}")
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Load a JSON config; keyword overrides win over file values."""
        with open(path) as fh:
            raw = json.load(fh)
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        if "seeds" in raw:
            raw["seeds"] = tuple(raw["seeds"])
        return cls(**raw)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def output_dir(cfg: ExperimentConfig) -> Path:
    if cfg.out is not None:
        return Path(cfg.out)
    root = Path(os.environ.get(OUTPUT_ROOT_VAR, "results"))
    return root / f"{cfg.env}-{cfg.method}"


def aggregate_stats(values) -> tuple[float, float]:
    """Mean and sample standard deviation; std is 0 for a single value."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    mean = float(arr.mean())
    std = 0.0 if arr.size == 1 else float(arr.std(ddof=1))
    return mean, std


# ---------------------------------------------------------------------------
# per-seed runners; each returns (cost, artifacts dict of relative paths)
# ---------------------------------------------------------------------------


def _make_env(cfg: ExperimentConfig):
    if cfg.dt is None:
        return make_env(cfg.env)
    return make_env(cfg.env, dt=cfg.dt)


def _write_trajectory(traj: Trajectory, seed_dir: Path, rel: Path) -> dict:
    traj.to_csv(seed_dir / "trajectory.csv")
    traj.events_to_csv(seed_dir / "events.csv")
    return {
        "trajectory": str(rel / "trajectory.csv"),
        "events": str(rel / "events.csv"),
    }


def _run_openloop(cfg: ExperimentConfig, seed: int, seed_dir: Path, rel: Path):
    env = _make_env(cfg)
    n = env.horizon_steps
    traj = rollout_open_loop(env.system, env.x0, np.zeros((n, env.act_dim)), env.integrator)
    return traj.total_cost, _write_trajectory(traj, seed_dir, rel), {"trajectory": traj}


def _run_ddp(cfg: ExperimentConfig, seed: int, seed_dir: Path, rel: Path):
    env = _make_env(cfg)
    ddp_cfg = DdpConfig(**cfg.ddp)
    sol = ddp_solve(env.system, env.x0, ddp_cfg, env.integrator)
    artifacts = _write_trajectory(sol.trajectory, seed_dir, rel)
    with open(seed_dir / "history.csv", "w", newline="") as fh:
        fh.write("iteration,cost\n")
        for i, c in enumerate(sol.cost_history):
            fh.write(f"{i},{float(c)!r}\n")
    artifacts["history"] = str(rel / "history.csv")
    extras = {"trajectory": sol.trajectory, "history": np.asarray(sol.cost_history)}
    return sol.trajectory.total_cost, artifacts, extras


def _run_ddpg(cfg: ExperimentConfig, seed: int, seed_dir: Path, rel: Path):
    env = _make_env(cfg)
    block = dict(cfg.ddpg)
    if cfg.episodes is not None:
        block["episodes"] = cfg.episodes
    block["seed"] = seed
    nets, curve = train(env, DdpgConfig(**block))
    curve.to_csv(seed_dir / "learning_curve.csv")
    save_checkpoint(seed_dir / "actor.bin", {"actor": nets.actor, "critic": nets.critic})
    traj, _ = evaluate(nets.actor, env)
    artifacts = _write_trajectory(traj, seed_dir, rel)
    artifacts["learning_curve"] = str(rel / "learning_curve.csv")
    artifacts["checkpoint"] = str(rel / "actor.bin")
    final = final_k_mean(curve.eval_costs, 10)
    extras = {"trajectory": traj, "curve": np.asarray(curve.eval_costs)}
    return final, artifacts, extras


def _run_hmp(cfg: ExperimentConfig, seed: int, seed_dir: Path, rel: Path):
    problem = problem_for_env(cfg.env)
    block = dict(cfg.hmp)
    lo = block.pop("bracket_lo", -20.0)
    hi = block.pop("bracket_hi", 20.0)
    n = block.pop("bracket_samples", 81)
    if block:
        raise ValueError(f"unknown hmp config keys: {sorted(block)}")
    sol = solve_best(problem, lo, hi, n)
    path = sol.path
    with open(seed_dir / "extremal.csv", "w", newline="") as fh:
        fh.write("t,x,costate,u\n")
        for t, x, lam, u in zip(path.times, path.states, path.costates, path.controls):
            fh.write(f"{float(t)!r},{float(x)!r},{float(lam)!r},{float(u)!r}\n")
    meta = {
        "cost": sol.cost,
        "tau": sol.tau,
        "lam0": sol.lam0,
        "lam_before": sol.lam_before,
        "lam_after": sol.lam_after,
        "u_before": sol.u_before,
        "u_after": sol.u_after,
        "control_jump": sol.control_jump,
        "crossings": list(path.crossings),
    }
    with open(seed_dir / "solution.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
    artifacts = {
        "extremal": str(rel / "extremal.csv"),
        "solution": str(rel / "solution.json"),
    }
    n_t = len(path.times)
    traj = Trajectory(
        times=np.asarray(path.times),
        states=np.asarray(path.states)[:, None],
        controls=np.asarray(path.controls)[: n_t - 1, None],
        modes=np.ones(n_t - 1, dtype=int),
        step_costs=np.zeros(n_t - 1),
        events=[],
        total_cost=sol.cost,
    )
    return sol.cost, artifacts, {"trajectory": traj}


#: Per-env defaults for the grid solver: box, nodes, layers, control samples.
HJB_DEFAULTS: dict[str, dict] = {
    "analytic1": {"lo": [-1.0], "hi": [4.0], "shape": [2001], "nt": 200,
                  "u_lo": -10.0, "u_hi": 10.0, "n_controls": 401},
    "analytic2": {"lo": [-1.0], "hi": [4.0], "shape": [2001], "nt": 200,
                  "u_lo": -50.0, "u_hi": 50.0, "n_controls": 401},
    "ex1": {"lo": [-12.0, -10.0], "hi": [4.0, 4.0], "shape": [101, 101], "nt": 100,
            "u_lo": -10.0, "u_hi": 10.0, "n_controls": 201},
    "ex2": {"lo": [-12.0, -10.0], "hi": [4.0, 4.0], "shape": [101, 101], "nt": 100,
            "u_lo": -10.0, "u_hi": 10.0, "n_controls": 201},
    "ex3": {"lo": [-2.0, -2.0], "hi": [11.0, 11.0], "shape": [101, 101], "nt": 100,
            "u_lo": -10.0, "u_hi": 10.0, "n_controls": 201},
}


def _run_hjb(cfg: ExperimentConfig, seed: int, seed_dir: Path, rel: Path):
    env = _make_env(cfg)
    block = {**HJB_DEFAULTS[cfg.env], **cfg.hjb}
    grid = GridSpec.uniform(
        block["lo"], block["hi"], block["shape"], block["nt"],
        block["u_lo"], block["u_hi"], block["n_controls"],
    )
    table = solve_backward(env.system, grid, env.integrator)
    table.save(seed_dir / "value_table.bin")
    artifacts = {"table": str(rel / "value_table.bin")}
    value = table.value_at(env.x0, 0)
    traj, greedy_cost = greedy_policy_eval(table, env.system, env.x0, env.integrator)
    artifacts.update(_write_trajectory(traj, seed_dir, rel))
    meta = {
        "value_at_x0": value,
        "greedy_cost": greedy_cost,
        "escaped": table.escaped,
        "zeno_truncated": table.zeno_truncated,
    }
    if grid.n_dim == 1:
        table.slice_to_csv(seed_dir / "value_slice.csv", 0)
        artifacts["slice"] = str(rel / "value_slice.csv")
        jumps = {}
        for b in env.system.boundaries:
            probe = interface_continuity_probe(table, b)
            jumps[b.name] = probe.max_jump
        meta["interface_jumps"] = jumps
    with open(seed_dir / "solution.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
    artifacts["solution"] = str(rel / "solution.json")
    return value, artifacts, {"trajectory": traj}


_RUNNERS = {
    "openloop": _run_openloop,
    "ddp": _run_ddp,
    "ddpg": _run_ddpg,
    "hmp": _run_hmp,
    "hjb": _run_hjb,
}


def _run_seed(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    rel = Path(f"seed-{seed}")
    seed_dir = out / rel
    seed_dir.mkdir(parents=True, exist_ok=True)
    try:
        cost, artifacts, extras = _RUNNERS[cfg.method](cfg, seed, seed_dir, rel)
    except Exception as exc:  # noqa: BLE001 - partial-failure reporting
        return {"seed": seed, "cost": None, "artifacts": {}, "error": f"{type(exc).__name__}: {exc}"}
    record = {"seed": seed, "cost": float(cost), "artifacts": artifacts}
    record["_extras"] = extras  # stripped before serialization
    return record


def _run_seed_job(args) -> dict:
    cfg_echo, seed, out = args
    cfg = ExperimentConfig(**cfg_echo)
    rec = _run_seed(cfg, seed, Path(out))
    rec.pop("_extras", None)  # not picklable across the pool; reload from CSV
    return rec


def run_suite(cfg: ExperimentConfig) -> tuple[dict, Path]:
    """Run every seed, write artifacts and summary.json, emit plots.

    Returns the summary dict and the output directory.  Seeds that raise
    are recorded with an ``error`` field and excluded from the stats; at
    least one seed must succeed.
    """
    t0 = time.perf_counter()
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        echo = cfg.echo()
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_seed_job, [(echo, s, str(out)) for s in cfg.seeds]))
    else:
        for seed in cfg.seeds:
            records.append(_run_seed(cfg, seed, out))

    extras = {r["seed"]: r.pop("_extras") for r in records if "_extras" in r}
    good = [r for r in records if r.get("error") is None and r["cost"] is not None]
    if not good:
        errs = "; ".join(f"seed {r['seed']}: {r['error']}" for r in records)
        raise RuntimeError(f"all seeds failed: {errs}")
    mean, std = aggregate_stats([r["cost"] for r in good])
    summary = {
        "env": cfg.env,
        "method": cfg.method,
        "seeds": records,
        "mean": mean,
        "std": std,
        "wallclock": time.perf_counter() - t0,
        "config": cfg.echo(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    emit_plots(summary, out, extras)
    return summary, out


def _load_curve(path: Path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return np.atleast_1d(data["eval_cost"])


def _load_trajectory_states(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = np.genfromtxt(path, delimiter=",", names=True)
    names = rows.dtype.names
    xs = np.stack([rows[n] for n in names if n.startswith("x")], axis=1)
    us = [n for n in names if n.startswith("u")]
    u = np.stack([rows[n][:-1] for n in us], axis=1)
    return np.atleast_1d(rows["t"]), xs, u


def emit_plots(summary: dict, out: Path, extras: dict | None = None) -> dict:
    """Write the phase / control / cost-curve figures for one run.

    ``extras`` carries in-memory per-seed results when available; missing
    entries reload from the CSV artifacts listed in the summary (this is
    the path worker-pool runs take).
    """
    extras = extras or {}
    dt = summary["config"].get("dt")
    env = make_env(summary["env"]) if dt is None else make_env(summary["env"], dt=dt)
    method = summary["method"]
    trajs: dict[str, Trajectory] = {}
    curves: dict[int, np.ndarray] = {}
    histories: dict[int, np.ndarray] = {}
    for rec in summary["seeds"]:
        if rec.get("error") is not None:
            continue
        seed = rec["seed"]
        label = f"seed {seed}"
        ex = extras.get(seed, {})
        if "trajectory" in ex:
            trajs[label] = ex["trajectory"]
        elif "trajectory" in rec["artifacts"]:
            t, xs, us = _load_trajectory_states(out / rec["artifacts"]["trajectory"])
            trajs[label] = Trajectory(
                t, xs, us, np.zeros(len(us), dtype=int), np.zeros(len(us)), [], rec["cost"]
            )
        if "curve" in ex:
            curves[seed] = ex["curve"]
        elif "learning_curve" in rec["artifacts"]:
            curves[seed] = _load_curve(out / rec["artifacts"]["learning_curve"])
        if "history" in ex:
            histories[seed] = ex["history"]
        elif "history" in rec["artifacts"]:
            data = np.genfromtxt(out / rec["artifacts"]["history"], delimiter=",", names=True)
            histories[seed] = np.atleast_1d(data["cost"])
    meta: dict = {}
    if trajs:
        meta["phase"] = plots.phase_plot(env, trajs, out / "phase.svg")
        if all(t.controls.size for t in trajs.values()):
            meta["control"] = plots.control_plot(env, trajs, out / "control.svg")
        else:
            meta["control"] = {"kind": "control", "skipped": "empty control sequence"}
    if curves:
        band = BANDS.get((summary["env"], "ddp"))
        ref = band.target if band is not None else None
        meta["costs"] = plots.learning_curve_plot(summary["env"], curves, out / "costs.svg", ref)
    elif histories:
        meta["costs"] = plots.iteration_plot(summary["env"], histories, out / "costs.svg")
    meta["method"] = method
    return meta


# ---------------------------------------------------------------------------
# band checks and comparison reports
# ---------------------------------------------------------------------------


def band_statistic(summary: dict, base_dir: Path, band: Band) -> float:
    """Evaluate the statistic a band constrains, from summary + artifacts."""
    good = [r for r in summary["seeds"] if r.get("error") is None]
    if band.stat == "cost":
        return float(np.mean([r["cost"] for r in good]))
    if band.stat == "best10":
        vals = []
        for rec in good:
            curve = _load_curve(base_dir / rec["artifacts"]["learning_curve"])
            vals.append(best_k_mean(curve, 10))
        return float(np.mean(vals))
    raise ValueError(f"unknown band statistic {band.stat!r}")


def check_bands(summary: dict, base_dir: Path) -> dict:
    """Evaluate the acceptance band for one summary, if one is registered.

    Returns {known, passed, value, lo, hi, details}; ``passed`` is True
    when no band is registered for the (env, method) pair.
    """
    key = (summary["env"], summary["method"])
    band = BANDS.get(key)
    errored = [r["seed"] for r in summary["seeds"] if r.get("error") is not None]
    if band is None:
        return {"known": False, "passed": not errored, "errored_seeds": errored}
    value = band_statistic(summary, base_dir, band)
    passed = bool(band.lo <= value <= band.hi) and not errored
    result = {
        "known": True,
        "passed": passed,
        "value": value,
        "lo": band.lo,
        "hi": band.hi,
        "stat": band.stat,
        "errored_seeds": errored,
    }
    if band.tau is not None:
        taus = []
        for rec in summary["seeds"]:
            if rec.get("error") is not None:
                continue
            with open(base_dir / rec["artifacts"]["solution"]) as fh:
                taus.append(json.load(fh)["tau"])
        tau = float(np.mean(taus))
        tau_ok = band.tau[0] <= tau <= band.tau[1]
        result["tau"] = tau
        result["tau_passed"] = bool(tau_ok)
        result["passed"] = passed and tau_ok
    return result


def compare_report(summaries: list[tuple[dict, Path]]) -> tuple[str, dict]:
    """Side-by-side method comparison over one env.

    Takes (summary, base_dir) pairs; all summaries must share the env.
    Returns the text table and a JSON-ready dict with per-method stats,
    deltas against the first entry, and band pass flags.
    """
    if len(summaries) < 2:
        raise ValueError("need at least two summaries to compare")
    envs = {s["env"] for s, _ in summaries}
    if len(envs) != 1:
        raise ValueError(f"env mismatch: {sorted(envs)}")
    env = envs.pop()
    base_mean = summaries[0][0]["mean"]
    rows = []
    for summary, base in summaries:
        check = check_bands(summary, base)
        rows.append(
            {
                "method": summary["method"],
                "mean": summary["mean"],
                "std": summary["std"],
                "n_seeds": len([r for r in summary["seeds"] if r.get("error") is None]),
                "delta_vs_first": summary["mean"] - base_mean,
                "band_known": check["known"],
                "band_passed": check["passed"],
            }
        )
    report = {"env": env, "rows": rows}
    lines = [f"env: {env}", f"{'method':<10}{'mean':>12}{'std':>10}{'delta':>12}  band"]
    for r in rows:
        flag = "pass" if r["band_passed"] else "FAIL"
        if not r["band_known"]:
            flag = "-" if r["band_passed"] else "FAIL(err)"
        lines.append(
            f"{r['method']:<10}{r['mean']:>12.4f}{r['std']:>10.4f}{r['delta_vs_first']:>12.4f}  {flag}"
        )
    return "\n".join(lines), report


def load_summary(path) -> tuple[dict, Path]:
    path = Path(path)
    with open(path) as fh:
        return json.load(fh), path.parent
