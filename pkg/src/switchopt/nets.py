"""Plain-numpy feed-forward networks with hand-written reverse mode.

Layers compute ``a_l = act(a_{l-1} @ W_l + b_l)`` with He-uniform weight
init and zero biases.  Gradients are exact for the stated forward pass
(relu takes derivative 0 at the kink).  Adam and Polyak (soft) updates
mutate parameters in place; forward passes never do.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")
CHECKPOINT_MAGIC = b"SWOPT-NET-1\n"


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class MlpParams:
    """Weights, biases, and per-layer activation tags of one MLP."""

    dims: tuple[int, ...]
    activations: tuple[str, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.dims,
            self.activations,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class _Cache:
    params: MlpParams
    inputs: list[np.ndarray]   # a_0 .. a_{L-1} (layer inputs)
    outputs: list[np.ndarray]  # a_1 .. a_L (post-activation)
    pre: list[np.ndarray]      # z_1 .. z_L
    single: bool


def init_params(
    dims,
    seed=None,
    activations: tuple[str, ...] | None = None,
    rng: np.random.Generator | None = None,
) -> MlpParams:
    """He-uniform init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("dims needs an input and an output size")
    n_layers = len(dims) - 1
    if activations is None:
        activations = ("relu",) * (n_layers - 1) + ("identity",)
    activations = tuple(activations)
    if len(activations) != n_layers:
        raise ValueError(f"expected {n_layers} activation tags, got {len(activations)}")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(dims, activations, weights, biases)


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, _Cache]:
    """Batch or single-vector forward pass; returns output and a cache."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != params.dims[0]:
        raise ValueError(f"input width {a.shape[1]} != {params.dims[0]}")
    inputs, outputs, pre = [], [], []
    for W, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(a)
        z = a @ W + b
        a = _apply(act, z)
        pre.append(z)
        outputs.append(a)
    cache = _Cache(params, inputs, outputs, pre, single)
    return (a[0] if single else a), cache


def backward(
    params: MlpParams,
    cache: _Cache,
    grad_out: np.ndarray,
    need_param_grads: bool = True,
) -> tuple[MlpGrads | None, np.ndarray]:
    """Reverse-mode pass; returns parameter grads and the input gradient."""
    if cache.params is not params:
        raise ValueError("cache was produced by a different parameter set")
    g = np.asarray(grad_out, dtype=float)
    if cache.single:
        g = g[None, :]
    dws: list[np.ndarray] = []
    dbs: list[np.ndarray] = []
    for layer in range(params.n_layers() - 1, -1, -1):
        act = params.activations[layer]
        if act == "relu":
            g = g * (cache.pre[layer] > 0.0)
        elif act == "tanh":
            g = g * (1.0 - cache.outputs[layer] ** 2)
        if need_param_grads:
            dws.append(cache.inputs[layer].T @ g)
            dbs.append(g.sum(axis=0))
        g = g @ params.weights[layer].T
    grads = MlpGrads(dws[::-1], dbs[::-1]) if need_param_grads else None
    return grads, (g[0] if cache.single else g)


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one MlpParams."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MlpParams, lr: float) -> "AdamState":
        state = cls(lr=lr)
        state.m_w = [np.zeros_like(w) for w in params.weights]
        state.v_w = [np.zeros_like(w) for w in params.weights]
        state.m_b = [np.zeros_like(b) for b in params.biases]
        state.v_b = [np.zeros_like(b) for b in params.biases]
        return state


def _adam_apply(m, v, g, theta, state) -> None:
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * g * g
    mhat = m / (1.0 - state.beta1 ** state.step)
    vhat = v / (1.0 - state.beta2 ** state.step)
    theta -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


def adam_update(state: AdamState, params: MlpParams, grads: MlpGrads) -> MlpParams:
    """One Adam step in place (descent direction); returns params for chaining."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient in Adam update")
    state.step += 1
    for i in range(params.n_layers()):
        _adam_apply(state.m_w[i], state.v_w[i], grads.weights[i], params.weights[i], state)
        _adam_apply(state.m_b[i], state.v_b[i], grads.biases[i], params.biases[i], state)
    return params


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    """Polyak blend ``target <- tau * source + (1 - tau) * target`` in place."""
    if target.dims != source.dims:
        raise ValueError("target and source shapes differ")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - tau
        tw += tau * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - tau
        tb += tau * sb
    return target


def finite_difference_grads(loss_fn, params: MlpParams, h: float = 1e-5) -> MlpGrads:
    """Central-difference gradient of ``loss_fn()`` w.r.t. every parameter.

    ``loss_fn`` must read the given params object; entries are perturbed in
    place and restored.  Used to validate the analytic reverse mode.
    """
    def probe(arr):
        g = np.zeros_like(arr)
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_fn()
            flat[i] = orig - h
            lo = loss_fn()
            flat[i] = orig
            g.ravel()[i] = (hi - lo) / (2.0 * h)
        return g

    return MlpGrads([probe(w) for w in params.weights], [probe(b) for b in params.biases])


# ---------------------------------------------------------------------------
# Q-network: separate state and action branches merged by concatenation.


@dataclass
class CriticNet:
    """Q(s, a) with a two-layer state branch, one-layer action branch, and a
    two-layer head on the concatenation, ending in a scalar linear output."""

    state_branch: MlpParams
    action_branch: MlpParams
    head: MlpParams

    def copy(self) -> "CriticNet":
        return CriticNet(self.state_branch.copy(), self.action_branch.copy(), self.head.copy())

    def branches(self):
        return (self.state_branch, self.action_branch, self.head)


@dataclass
class CriticGrads:
    state_branch: MlpGrads
    action_branch: MlpGrads
    head: MlpGrads


@dataclass
class _CriticCache:
    net: CriticNet
    s_cache: _Cache
    a_cache: _Cache
    h_cache: _Cache
    single: bool


def init_critic(obs_dim: int, act_dim: int, seed=None, width: int = 64) -> CriticNet:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(3)]
    state_branch = init_params(
        (obs_dim, width, width), activations=("relu", "relu"), rng=rngs[0]
    )
    action_branch = init_params((act_dim, width), activations=("relu",), rng=rngs[1])
    head = init_params(
        (2 * width, width, width, 1), activations=("relu", "relu", "identity"), rng=rngs[2]
    )
    return CriticNet(state_branch, action_branch, head)


def critic_forward(net: CriticNet, obs: np.ndarray, act: np.ndarray):
    """Returns ``(q, cache)`` with q shaped (batch,) or scalar for vectors."""
    obs = np.asarray(obs, dtype=float)
    single = obs.ndim == 1
    if single:
        obs = obs[None, :]
        act = np.asarray(act, dtype=float)[None, :]
    s_out, s_cache = forward(net.state_branch, obs)
    a_out, a_cache = forward(net.action_branch, act)
    q, h_cache = forward(net.head, np.concatenate([s_out, a_out], axis=1))
    q = q[:, 0]
    cache = _CriticCache(net, s_cache, a_cache, h_cache, single)
    return (float(q[0]) if single else q), cache


def critic_backward(
    net: CriticNet,
    cache: _CriticCache,
    grad_q: np.ndarray,
    need_param_grads: bool = True,
):
    """Backprop through the merged critic.

    Returns ``(grads, grad_obs, grad_act)``; grads is None when
    ``need_param_grads`` is false (actor updates only need grad_act).
    """
    if cache.net is not net:
        raise ValueError("cache was produced by a different critic")
    g = np.atleast_1d(np.asarray(grad_q, dtype=float))[:, None]
    h_grads, g_cat = backward(net.head, cache.h_cache, g, need_param_grads)
    width = net.state_branch.dims[-1]
    s_grads, grad_obs = backward(net.state_branch, cache.s_cache, g_cat[:, :width], need_param_grads)
    a_grads, grad_act = backward(net.action_branch, cache.a_cache, g_cat[:, width:], need_param_grads)
    grads = CriticGrads(s_grads, a_grads, h_grads) if need_param_grads else None
    if cache.single:
        grad_obs, grad_act = grad_obs[0], grad_act[0]
    return grads, grad_obs, grad_act


@dataclass
class CriticAdam:
    state_branch: AdamState
    action_branch: AdamState
    head: AdamState

    @classmethod
    def for_net(cls, net: CriticNet, lr: float) -> "CriticAdam":
        return cls(
            AdamState.for_params(net.state_branch, lr),
            AdamState.for_params(net.action_branch, lr),
            AdamState.for_params(net.head, lr),
        )


def critic_adam_update(state: CriticAdam, net: CriticNet, grads: CriticGrads) -> CriticNet:
    adam_update(state.state_branch, net.state_branch, grads.state_branch)
    adam_update(state.action_branch, net.action_branch, grads.action_branch)
    adam_update(state.head, net.head, grads.head)
    return net


def critic_soft_update(target: CriticNet, source: CriticNet, tau: float) -> CriticNet:
    for t, s in zip(target.branches(), source.branches()):
        soft_update(t, s, tau)
    return target


# ---------------------------------------------------------------------------
# Checkpoints: magic line, JSON header with shapes, raw little-endian
# float64 arrays in header order.


def _entry_header(name: str, params: MlpParams) -> dict:
    return {"name": name, "dims": list(params.dims), "activations": list(params.activations)}


def save_checkpoint(path, nets: dict) -> None:
    """Write named MlpParams / CriticNet objects to one binary file."""
    entries = []
    arrays: list[np.ndarray] = []

    def add_mlp(name, params):
        entries.append(_entry_header(name, params))
        for w, b in zip(params.weights, params.biases):
            arrays.extend([w, b])

    for name in sorted(nets):
        net = nets[name]
        if isinstance(net, CriticNet):
            for part, params in zip(("state_branch", "action_branch", "head"), net.branches()):
                add_mlp(f"{name}/{part}", params)
        elif isinstance(net, MlpParams):
            add_mlp(name, net)
        else:
            raise TypeError(f"cannot checkpoint object of type {type(net).__name__}")
    header = json.dumps({"entries": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(header).to_bytes(8, "big"))
        fh.write(header)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict:
    """Inverse of `save_checkpoint`; reassembles CriticNet bundles by name."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(header_len).decode())
        flat: dict[str, MlpParams] = {}
        for entry in header["entries"]:
            dims = tuple(entry["dims"])
            activations = tuple(entry["activations"])
            weights, biases = [], []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
                weights.append(w.reshape(fan_in, fan_out).copy())
                biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy())
            flat[entry["name"]] = MlpParams(dims, activations, weights, biases)
    out: dict = {}
    critic_parts: dict[str, dict[str, MlpParams]] = {}
    for name, params in flat.items():
        if "/" in name:
            base, part = name.split("/", 1)
            critic_parts.setdefault(base, {})[part] = params
        else:
            out[name] = params
    for base, parts in critic_parts.items():
        out[base] = CriticNet(parts["state_branch"], parts["action_branch"], parts["head"])
    return out
