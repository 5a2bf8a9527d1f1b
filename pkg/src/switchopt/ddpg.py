"""Deterministic actor-critic with replay and target networks.

The actor outputs tanh-squashed actions scaled by the control bound; the
critic consumes the observation and the normalized action.  Targets are
Polyak copies.  With discount 1 and time in the observation the learned Q
approximates the negated cost-to-go of the discrete-time problem, so
evaluation costs are directly comparable with the trajectory optimizers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .envs import Episode, EnvConfig, greedy_rollout
from .nets import (
    AdamState,
    CriticAdam,
    CriticNet,
    DivergenceError,
    MlpParams,
    adam_update,
    backward,
    critic_adam_update,
    critic_backward,
    critic_forward,
    critic_soft_update,
    forward,
    init_critic,
    init_params,
    soft_update,
)
from .simulate import Trajectory


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray  # normalized to [-1, 1]
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer; overwrites oldest entries first."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._obs = np.empty((self.capacity, obs_dim))
        self._act = np.empty((self.capacity, act_dim))
        self._rew = np.empty(self.capacity)
        self._next = np.empty((self.capacity, obs_dim))
        self._done = np.empty(self.capacity)
        self.size = 0
        self._head = 0
        self.pushed = 0

    def push(self, tr: Transition) -> None:
        i = self._head
        self._obs[i] = tr.obs
        self._act[i] = tr.action
        self._rew[i] = tr.reward
        self._next[i] = tr.next_obs
        self._done[i] = float(tr.done)
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """Uniform sample of n transitions with replacement."""
        if self.size < n:
            raise ValueError(f"buffer holds {self.size} transitions, need {n}")
        idx = rng.integers(0, self.size, size=n)
        return Batch(
            self._obs[idx], self._act[idx], self._rew[idx], self._next[idx], self._done[idx]
        )


@dataclass(frozen=True)
class DdpgConfig:
    episodes: int = 300
    gamma: float = 1.0
    tau_soft: float = 0.005
    lr_actor: float = 1e-3
    lr_critic: float = 2e-3
    batch_size: int = 64
    capacity: int = 100_000
    warmup: int = 1000
    noise_sigma0: float = 0.1    # initial noise std as a fraction of u_max
    noise_sigma_end: float = 0.01
    width: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau_soft <= 1.0:
            raise ValueError("tau_soft must lie in (0, 1]")
        if self.episodes < 1 or self.batch_size < 1 or self.capacity < self.batch_size:
            raise ValueError("inconsistent episode/batch/capacity settings")
        if self.noise_sigma0 < 0 or self.noise_sigma_end < 0:
            raise ValueError("noise levels must be nonnegative")


@dataclass
class DdpgNets:
    actor: MlpParams
    critic: CriticNet
    target_actor: MlpParams
    target_critic: CriticNet
    u_scale: np.ndarray


@dataclass
class DdpgState:
    nets: DdpgNets
    adam_actor: AdamState
    adam_critic: CriticAdam


@dataclass
class LearningCurve:
    """Per-episode training record; every array has length `episodes`."""

    eval_costs: np.ndarray
    train_returns: np.ndarray
    critic_losses: np.ndarray
    bellman_residuals: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["episode", "eval_cost", "train_return", "critic_loss", "bellman_residual"]
            )
            for i in range(self.eval_costs.size):
                writer.writerow(
                    [
                        i,
                        repr(float(self.eval_costs[i])),
                        repr(float(self.train_returns[i])),
                        repr(float(self.critic_losses[i])),
                        repr(float(self.bellman_residuals[i])),
                    ]
                )


def init_nets(env: EnvConfig, cfg: DdpgConfig) -> DdpgNets:
    ss = np.random.SeedSequence(cfg.seed)
    actor_seed, critic_seed = ss.spawn(2)
    actor = init_params(
        (env.obs_dim, cfg.width, cfg.width, env.act_dim),
        activations=("relu", "relu", "tanh"),
        rng=np.random.default_rng(actor_seed),
    )
    critic = init_critic(env.obs_dim, env.act_dim, seed=critic_seed, width=cfg.width)
    return DdpgNets(actor, critic, actor.copy(), critic.copy(), env.control_scale.copy())


def policy_action(actor: MlpParams, u_scale: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Deterministic control mu(obs): tanh output scaled to the bounds."""
    raw, _ = forward(actor, obs)
    return u_scale * raw


def critic_target(
    batch: Batch, gamma: float, target_actor: MlpParams, target_critic: CriticNet
) -> np.ndarray:
    """Bootstrap targets ``y = r + gamma * (1 - done) * Q'(s', mu'(s'))``."""
    next_act, _ = forward(target_actor, batch.next_obs)
    q_next, _ = critic_forward(target_critic, batch.next_obs, next_act)
    return batch.reward + gamma * (1.0 - batch.done) * q_next


def update_step(
    state: DdpgState, buffer: ReplayBuffer, cfg: DdpgConfig, rng: np.random.Generator
) -> tuple[float, float]:
    """One critic regression step and one actor ascent step on a fresh batch.

    Returns ``(critic_loss, actor_value)`` where actor_value is the batch
    mean of Q(s, mu(s)) before the actor update.
    """
    nets = state.nets
    batch = buffer.sample(cfg.batch_size, rng)
    n = cfg.batch_size

    y = critic_target(batch, cfg.gamma, nets.target_actor, nets.target_critic)
    q, cache = critic_forward(nets.critic, batch.obs, batch.action)
    err = q - y
    critic_loss = float(err @ err) / n
    if not np.isfinite(critic_loss):
        raise DivergenceError("critic loss is not finite")
    grads, _, _ = critic_backward(nets.critic, cache, 2.0 * err / n)
    critic_adam_update(state.adam_critic, nets.critic, grads)

    act_pred, a_cache = forward(nets.actor, batch.obs)
    q_pred, c_cache = critic_forward(nets.critic, batch.obs, act_pred)
    actor_value = float(q_pred.mean())
    # Ascend mean Q: minimize its negation; the critic consumes normalized
    # actions, so the tanh output feeds in without rescaling.
    _, _, grad_act = critic_backward(
        nets.critic, c_cache, np.full(n, -1.0 / n), need_param_grads=False
    )
    actor_grads, _ = backward(nets.actor, a_cache, grad_act)
    adam_update(state.adam_actor, nets.actor, actor_grads)

    soft_update(nets.target_actor, nets.actor, cfg.tau_soft)
    critic_soft_update(nets.target_critic, nets.critic, cfg.tau_soft)
    return critic_loss, actor_value


def evaluate(actor: MlpParams, env: EnvConfig) -> tuple[Trajectory, float]:
    """Noise-free rollout of the current policy; returns (trajectory, cost)."""
    u_scale = env.control_scale

    def policy(x, t):
        raw, _ = forward(actor, env.observe(x, t))
        return u_scale * raw

    traj = greedy_rollout(env, policy)
    return traj, traj.total_cost


def bellman_residual(nets: DdpgNets, env: EnvConfig, traj: Trajectory, gamma: float) -> float:
    """Mean squared one-step Bellman residual of Q along an on-policy rollout."""
    n = len(traj)
    dt = env.integrator.dt
    obs = np.stack([env.observe(traj.states[k], traj.times[k]) for k in range(n + 1)])
    act = traj.controls / nets.u_scale
    rew = -traj.step_costs
    if env.system.terminal_cost is not None:
        rew = rew.copy()
        rew[-1] -= env.system.terminal(traj.states[-1])
    done = np.zeros(n)
    done[-1] = 1.0
    q, _ = critic_forward(nets.critic, obs[:-1], act)
    next_act, _ = forward(nets.actor, obs[1:])
    q_next, _ = critic_forward(nets.critic, obs[1:], next_act)
    resid = rew + gamma * (1.0 - done) * q_next - q
    return float(resid @ resid) / n


def _noise_sigma(cfg: DdpgConfig, episode: int) -> float:
    if cfg.episodes == 1:
        return cfg.noise_sigma0
    frac = episode / (cfg.episodes - 1)
    return cfg.noise_sigma0 + (cfg.noise_sigma_end - cfg.noise_sigma0) * frac


def train(env: EnvConfig, cfg: DdpgConfig, step_hook=None) -> tuple[DdpgNets, LearningCurve]:
    """Run the full training loop; deterministic for a fixed cfg.seed.

    Args:
        env: benchmark environment.
        cfg: hyperparameters; `cfg.seed` controls init, noise, and sampling.
        step_hook: optional callable ``(episode, k, mu_u, executed_u)`` for
            instrumentation in tests.

    Returns:
        The trained networks and the per-episode learning curve.

    Raises:
        DivergenceError: a loss or gradient became non-finite; the message
            carries the episode and step where it happened.
    """
    ss = np.random.SeedSequence(cfg.seed)
    _, _, noise_seed, sample_seed = ss.spawn(4)  # first two consumed by init_nets
    noise_rng = np.random.default_rng(noise_seed)
    sample_rng = np.random.default_rng(sample_seed)
    nets = init_nets(env, cfg)
    state = DdpgState(
        nets,
        AdamState.for_params(nets.actor, cfg.lr_actor),
        CriticAdam.for_net(nets.critic, cfg.lr_critic),
    )
    buffer = ReplayBuffer(cfg.capacity, env.obs_dim, env.act_dim)
    u_scale = env.control_scale
    min_fill = max(cfg.batch_size, cfg.warmup)
    T = env.horizon_steps

    eval_costs = np.empty(cfg.episodes)
    train_returns = np.empty(cfg.episodes)
    critic_losses = np.full(cfg.episodes, np.nan)
    residuals = np.empty(cfg.episodes)

    episode = Episode(env)
    for ep in range(cfg.episodes):
        sigma = _noise_sigma(cfg, ep) * u_scale
        obs = episode.reset()
        ep_return = 0.0
        losses = []
        for k in range(T):
            raw, _ = forward(nets.actor, obs)
            mu_u = u_scale * raw
            u = env.system.clamp(mu_u + noise_rng.normal(0.0, 1.0, size=u_scale.size) * sigma)
            if step_hook is not None:
                step_hook(ep, k, mu_u, u)
            next_obs, reward, done = episode.step(u)
            buffer.push(Transition(obs, u / u_scale, reward, next_obs, done))
            ep_return += reward
            if buffer.size >= min_fill:
                try:
                    loss, _ = update_step(state, buffer, cfg, sample_rng)
                except DivergenceError as err:
                    raise DivergenceError(f"episode {ep}, step {k}: {err}") from err
                losses.append(loss)
            obs = next_obs
        traj, cost = evaluate(nets.actor, env)
        eval_costs[ep] = cost
        train_returns[ep] = ep_return
        critic_losses[ep] = np.mean(losses) if losses else np.nan
        residuals[ep] = bellman_residual(nets, env, traj, cfg.gamma)
    curve = LearningCurve(eval_costs, train_returns, critic_losses, residuals)
    return nets, curve


def best_k_mean(values: np.ndarray, k: int = 10) -> float:
    """Mean of the k smallest entries (evaluation costs are minimized)."""
    values = np.asarray(values, dtype=float)
    k = min(k, values.size)
    return float(np.sort(values)[:k].mean())


def final_k_mean(values: np.ndarray, k: int = 10) -> float:
    """Mean of the last k entries of a learning curve."""
    values = np.asarray(values, dtype=float)
    return float(values[-min(k, values.size):].mean())
