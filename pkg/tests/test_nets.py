"""Numpy MLP: gradients against finite differences, Adam, checkpoints."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchopt.nets import (
    AdamState,
    CriticAdam,
    CriticNet,
    DivergenceError,
    MlpParams,
    adam_update,
    backward,
    critic_backward,
    critic_forward,
    critic_soft_update,
    finite_difference_grads,
    forward,
    init_critic,
    init_params,
    load_checkpoint,
    save_checkpoint,
    soft_update,
)


def _rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom


def _relu_margin(params, cache):
    """Distance of the nearest relu pre-activation to its kink.

    Central differences are invalid within a step of the kink (the
    subgradient convention charges it zero, the quotient sees half the
    slope), so gradcheck inputs must keep a healthy margin.
    """
    margins = [
        np.abs(cache.pre[i]).min()
        for i, act in enumerate(params.activations)
        if act == "relu"
    ]
    return min(margins) if margins else np.inf


def test_init_params_shapes_and_bounds():
    p = init_params((3, 16, 2), seed=0)
    assert p.dims == (3, 16, 2)
    assert p.activations == ("relu", "identity")
    assert [w.shape for w in p.weights] == [(3, 16), (16, 2)]
    assert [b.shape for b in p.biases] == [(16,), (2,)]
    assert np.all(np.abs(p.weights[0]) <= np.sqrt(6.0 / 3.0))
    assert np.all(p.biases[0] == 0.0)


def test_init_params_seed_determinism():
    a = init_params((4, 8, 1), seed=7)
    b = init_params((4, 8, 1), seed=7)
    c = init_params((4, 8, 1), seed=8)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    assert any(not np.array_equal(wa, wc) for wa, wc in zip(a.weights, c.weights))


def test_forward_single_matches_batch(rng):
    p = init_params((3, 8, 8, 2), seed=1, activations=("relu", "tanh", "identity"))
    X = rng.normal(size=(5, 3))
    batch_out, _ = forward(p, X)
    for i in range(5):
        single_out, _ = forward(p, X[i])
        assert single_out.shape == (2,)
        np.testing.assert_allclose(single_out, batch_out[i], atol=1e-14)


def test_forward_known_values():
    p = MlpParams(
        dims=(1, 1),
        activations=("tanh",),
        weights=[np.array([[2.0]])],
        biases=[np.array([0.5])],
    )
    out, _ = forward(p, np.array([1.0]))
    assert out[0] == pytest.approx(np.tanh(2.5))


@pytest.mark.property_suite
def test_mlp_gradcheck_against_finite_differences(rng):
    p = init_params((4, 8, 8, 1), seed=3, activations=("relu", "tanh", "identity"))
    for _ in range(50):
        x = rng.normal(size=(6, 4))
        target = rng.normal(size=(6, 1))
        _, cache = forward(p, x)
        if _relu_margin(p, cache) > 1e-4:
            break
    else:
        pytest.fail("could not draw inputs clear of the relu kinks")

    def loss():
        out, _ = forward(p, x)
        return 0.5 * float(np.sum((out - target) ** 2))

    out, cache = forward(p, x)
    grads, _ = backward(p, cache, out - target)
    fd = finite_difference_grads(loss, p)
    for g, f in zip(grads.weights + grads.biases, fd.weights + fd.biases):
        assert _rel_err(g, f) < 1e-6


def test_input_gradient_against_finite_differences(rng):
    p = init_params((3, 8, 1), seed=5, activations=("tanh", "identity"))
    x = rng.normal(size=3)
    out, cache = forward(p, x)
    _, gin = backward(p, cache, np.ones(1), need_param_grads=False)
    h = 1e-6
    for j in range(3):
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        fd = (forward(p, xp)[0][0] - forward(p, xm)[0][0]) / (2 * h)
        assert gin[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_backward_rejects_foreign_cache(rng):
    p = init_params((2, 4, 1), seed=0)
    q = init_params((2, 4, 1), seed=1)
    x = rng.normal(size=(3, 2))
    _, cache = forward(p, x)
    with pytest.raises(ValueError, match="different parameter set"):
        backward(q, cache, np.ones((3, 1)))


@pytest.mark.property_suite
def test_critic_gradcheck_against_finite_differences(rng):
    net = init_critic(obs_dim=3, act_dim=1, seed=11, width=8)
    # A row that dies everywhere in one branch puts the next layer's
    # pre-activation exactly on the relu kink (the biases start at zero),
    # where finite differences disagree with the subgradient. Redraw
    # until every pre-activation has a margin.
    for _ in range(50):
        obs = rng.normal(size=(4, 3))
        act = rng.normal(size=(4, 1))
        _, cache = critic_forward(net, obs, act)
        margin = min(
            _relu_margin(net.state_branch, cache.s_cache),
            _relu_margin(net.action_branch, cache.a_cache),
            _relu_margin(net.head, cache.h_cache),
        )
        if margin > 1e-4:
            break
    else:
        pytest.fail("could not draw inputs clear of the relu kinks")

    q, cache = critic_forward(net, obs, act)
    grads, gobs, gact = critic_backward(net, cache, np.ones_like(q))

    h = 1e-6
    for j in range(obs.shape[1]):
        op = obs.copy()
        op[:, j] += h
        om = obs.copy()
        om[:, j] -= h
        fd = (critic_forward(net, op, act)[0] - critic_forward(net, om, act)[0]) / (2 * h)
        np.testing.assert_allclose(gobs[:, j], fd.ravel(), rtol=1e-5, atol=1e-7)
    ap = act + h
    am = act - h
    fd = (critic_forward(net, obs, ap)[0] - critic_forward(net, obs, am)[0]) / (2 * h)
    np.testing.assert_allclose(gact[:, 0], fd.ravel(), rtol=1e-5, atol=1e-7)

    def loss():
        qv, _ = critic_forward(net, obs, act)
        return float(np.sum(qv))

    for part_name in ("state_branch", "action_branch", "head"):
        part = getattr(net, part_name)
        gpart = getattr(grads, part_name)
        fd_part = finite_difference_grads(loss, part)
        for g, f in zip(gpart.weights + gpart.biases, fd_part.weights + fd_part.biases):
            assert _rel_err(g, f) < 1e-6


def test_adam_first_step_is_signed_lr():
    p = init_params((2, 2), seed=0, activations=("identity",))
    grads_w = [np.array([[1.0, -2.0], [0.5, -0.25]])]
    grads_b = [np.array([3.0, -4.0])]
    from switchopt.nets import MlpGrads

    g = MlpGrads(weights=grads_w, biases=grads_b)
    before = [w.copy() for w in p.weights]
    state = AdamState.for_params(p, lr=1e-3)
    adam_update(state, p, g)
    step = before[0] - p.weights[0]
    np.testing.assert_allclose(step, 1e-3 * np.sign(grads_w[0]), rtol=1e-6)


def test_adam_rejects_non_finite_grads():
    p = init_params((2, 2), seed=0)
    from switchopt.nets import MlpGrads

    g = MlpGrads(weights=[np.array([[np.nan, 0.0], [0.0, 0.0]])],
                 biases=[np.zeros(2)])
    state = AdamState.for_params(p, lr=1e-3)
    with pytest.raises(DivergenceError):
        adam_update(state, p, g)


def test_soft_update_identity():
    t = init_params((3, 4, 1), seed=0)
    s = init_params((3, 4, 1), seed=1)
    t0 = [w.copy() for w in t.weights]
    tau = 0.25
    soft_update(t, s, tau)
    for tw, t0w, sw in zip(t.weights, t0, s.weights):
        np.testing.assert_allclose(tw, (1 - tau) * t0w + tau * sw, atol=1e-15)


@pytest.mark.property_suite
@given(tau=st.floats(0.001, 1.0))
def test_soft_update_contracts_distance(tau):
    t = init_params((3, 4, 1), seed=0)
    s = init_params((3, 4, 1), seed=1)
    d0 = sum(np.linalg.norm(tw - sw) ** 2 for tw, sw in zip(t.weights, s.weights))
    soft_update(t, s, tau)
    d1 = sum(np.linalg.norm(tw - sw) ** 2 for tw, sw in zip(t.weights, s.weights))
    # Distance to the source scales by exactly (1 - tau) per call.
    assert np.sqrt(d1) == pytest.approx((1 - tau) * np.sqrt(d0), rel=1e-9, abs=1e-12)


def test_soft_update_validation():
    t = init_params((3, 4, 1), seed=0)
    s = init_params((3, 5, 1), seed=1)
    with pytest.raises(ValueError, match="shapes differ"):
        soft_update(t, s, 0.5)
    s2 = init_params((3, 4, 1), seed=1)
    with pytest.raises(ValueError, match="tau"):
        soft_update(t, s2, 0.0)
    with pytest.raises(ValueError, match="tau"):
        soft_update(t, s2, 1.5)


def test_tau_one_copies_source():
    t = init_params((2, 3, 1), seed=0)
    s = init_params((2, 3, 1), seed=9)
    soft_update(t, s, 1.0)
    for tw, sw in zip(t.weights, s.weights):
        assert np.array_equal(tw, sw)


def test_critic_soft_update_touches_all_parts():
    t = init_critic(2, 1, seed=0, width=4)
    s = init_critic(2, 1, seed=1, width=4)
    critic_soft_update(t, s, 1.0)
    for part in ("state_branch", "action_branch", "head"):
        for tw, sw in zip(getattr(t, part).weights, getattr(s, part).weights):
            assert np.array_equal(tw, sw)


def test_checkpoint_round_trip(tmp_path, rng):
    actor = init_params((3, 8, 1), seed=2, activations=("relu", "tanh"))
    critic = init_critic(3, 1, seed=3, width=8)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, {"actor": actor, "critic": critic})
    loaded = load_checkpoint(path)
    assert set(loaded) == {"actor", "critic"}
    a2 = loaded["actor"]
    assert isinstance(a2, MlpParams)
    assert a2.dims == actor.dims and a2.activations == actor.activations
    for w1, w2 in zip(actor.weights, a2.weights):
        assert np.array_equal(w1, w2)
    c2 = loaded["critic"]
    assert isinstance(c2, CriticNet)
    x = rng.normal(size=(4, 3))
    u = rng.normal(size=(4, 1))
    q1, _ = critic_forward(critic, x, u)
    q2, _ = critic_forward(c2, x, u)
    assert np.array_equal(q1, q2)


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        load_checkpoint(p)
    with pytest.raises(TypeError):
        save_checkpoint(tmp_path / "x.bin", {"thing": object()})


def test_init_params_validation():
    with pytest.raises(ValueError, match="input and an output"):
        init_params((4,))
    with pytest.raises(ValueError, match="activation tags"):
        init_params((4, 2), activations=("relu", "relu"))
    with pytest.raises(ValueError, match="unknown activation"):
        init_params((4, 2), activations=("softplus",))
