import numpy as np
import pytest

from tailflow.errors import DivergenceError, NonFiniteInputError
from tailflow.nn import (OptimizerState, VelocityNet, adamw_step, clip_by_global_norm,
                         geometric_frequencies, time_embed)


def small_net(seed, d=3, width=8, embed=8):
    rng = np.random.default_rng(seed)
    net = VelocityNet(d, hidden=width, n_layers=2, embed_dim=embed, freq_range=(1.0, 10.0))
    net.set_params(rng.normal(0, 0.5, net.n_params))
    return net, rng


def fd_grad(net, x, target, t, h=1e-6):
    base = net.params.copy()
    out = np.empty(net.n_params)
    for i in range(net.n_params):
        net.params[i] = base[i] + h
        up = net.loss(x, target, t)
        net.params[i] = base[i] - h
        dn = net.loss(x, target, t)
        net.params[i] = base[i]
        out[i] = (up - dn) / (2 * h)
    return out


# -- embedding ----------------------------------------------------------------------

def test_time_embedding():
    w = geometric_frequencies()
    assert w.shape == (128,) and w[0] == 1.0 and w[-1] == pytest.approx(1000.0)
    e0 = time_embed(0.0, w)
    assert e0.shape == (256,)
    assert np.all(e0[:128] == 0) and np.all(e0[128:] == 1)
    grid = np.linspace(0, 1, 1001)
    emb = time_embed(grid, w)
    assert np.allclose(np.sum(emb**2, axis=1), 128.0)
    gaps = np.linalg.norm(np.diff(emb, axis=0), axis=1)
    assert gaps.min() > 1e-3


# -- forward ------------------------------------------------------------------------

def test_initial_field_is_zero():
    net = VelocityNet(4, hidden=16, n_layers=4, embed_dim=16)
    x = np.random.default_rng(0).standard_normal((7, 4))
    assert np.all(net.forward(x, 0.3) == 0.0)


def test_forward_shapes_and_determinism():
    net, rng = small_net(1)
    x = rng.standard_normal((11, 3))
    t = rng.random(11)
    a = net.forward(x, t)
    assert a.shape == (11, 3)
    assert a.tobytes() == net.forward(x, t).tobytes()
    assert a.tobytes() == net.copy().forward(x, t).tobytes()


def test_permutation_equivariance():
    net, rng = small_net(2)
    x = rng.standard_normal((9, 3))
    t = rng.random(9)
    perm = rng.permutation(9)
    assert np.allclose(net.forward(x[perm], t[perm]), net.forward(x, t)[perm], rtol=0, atol=1e-14)


def test_shared_time_matches_per_row_time():
    net, rng = small_net(3)
    x = rng.standard_normal((6, 3))
    shared = net.forward(x, 0.4)
    t = np.full(6, 0.4)
    t_split = t.copy()
    t_split[-1] = 0.4000001
    per_row = net.forward(x, t_split)
    assert np.allclose(shared, net.forward(x, t), atol=1e-14)
    assert np.allclose(shared[:-1], per_row[:-1], atol=1e-13)


def test_forward_rejects_bad_input():
    net, _ = small_net(4)
    with pytest.raises(NonFiniteInputError):
        net.forward(np.array([[0.0, np.nan, 1.0]]), 0.5)
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 4)), 0.5)
    with pytest.raises(ValueError):
        VelocityNet(2, embed_dim=7)


# -- gradients ----------------------------------------------------------------------

def test_gradient_matches_finite_differences():
    worst = 0.0
    for draw in range(50):
        net, rng = small_net(100 + draw)
        x = rng.standard_normal((5, 3))
        target = rng.standard_normal((5, 3))
        t = rng.random(5) if draw % 2 else np.full(5, rng.random())
        _, g = net.loss_and_grad(x, target, t)
        fd = fd_grad(net, x, target, t)
        worst = max(worst, np.max(np.abs(g - fd)) / np.max(np.abs(fd)))
    assert worst <= 1e-4


def test_zero_residual_gives_zero_gradient():
    net, rng = small_net(5)
    x = rng.standard_normal((4, 3))
    t = rng.random(4)
    loss, g = net.loss_and_grad(x, net.forward(x, t), t)
    assert loss == 0.0 and np.all(g == 0.0)


def test_duplicated_batch_is_invariant():
    net, rng = small_net(6)
    x = rng.standard_normal((4, 3))
    target = rng.standard_normal((4, 3))
    t = rng.random(4)
    l1, g1 = net.loss_and_grad(x, target, t)
    l2, g2 = net.loss_and_grad(np.vstack([x, x]), np.vstack([target, target]), np.r_[t, t])
    assert l2 == pytest.approx(l1, rel=1e-14)
    assert np.allclose(g2, g1, rtol=1e-12, atol=1e-15)


def test_non_finite_loss_signals_divergence():
    net, rng = small_net(7)
    x = rng.standard_normal((2, 3))
    with pytest.raises(DivergenceError):
        net.loss_and_grad(x, np.full((2, 3), 1e300), 0.5)


def test_jvp_matches_finite_differences():
    net, rng = small_net(8)
    x = rng.standard_normal((6, 3))
    t = rng.random(6)
    v = rng.standard_normal((6, 3))
    h = 1e-4
    fd = (net.forward(x + h * v, t) - net.forward(x - h * v, t)) / (2 * h)
    jv = net.jvp(x, t, v)
    assert np.linalg.norm(jv - fd) <= 1e-5 * np.linalg.norm(fd)
    assert np.all(net.jvp(x, t, np.zeros_like(v)) == 0.0)


def test_jvp_probe_axis():
    net, rng = small_net(9)
    x = rng.standard_normal((4, 3))
    v = rng.standard_normal((5, 4, 3))
    stacked = net.jvp(x, 0.2, v)
    assert stacked.shape == (5, 4, 3)
    for k in range(5):
        assert np.allclose(stacked[k], net.jvp(x, 0.2, v[k]), atol=1e-14)


def test_jvp_vjp_adjoint():
    for seed in range(5):
        net, rng = small_net(20 + seed)
        x = rng.standard_normal((7, 3))
        t = rng.random(7)
        u = rng.standard_normal((7, 3))
        v = rng.standard_normal((7, 3))
        lhs = np.sum(u * net.jvp(x, t, v))
        rhs = np.sum(net.vjp(x, t, u) * v)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_linear_field_jvp_is_exact():
    from tailflow.flow.fields import LinearField

    rng = np.random.default_rng(10)
    A = rng.standard_normal((3, 3))
    v = rng.standard_normal((5, 3))
    assert np.allclose(LinearField(A).jvp(rng.standard_normal((5, 3)), 0.1, v), v @ A.T,
                       atol=1e-14)
    with pytest.raises(ValueError):
        VelocityNet(3, hidden=4, n_layers=0, embed_dim=2)


# -- optimizer ----------------------------------------------------------------------

def test_adamw_zero_grad_zero_decay():
    p = np.arange(5.0)
    state = OptimizerState.for_params(p, weight_decay=0.0)
    adamw_step(p, state, np.zeros(5))
    assert np.array_equal(p, np.arange(5.0)) and state.step == 1


def test_clipping():
    g = np.zeros(4)
    g[0] = 100.0
    clipped, norm = clip_by_global_norm(g, 10.0)
    assert norm == 100.0 and np.linalg.norm(clipped) == pytest.approx(10.0)
    state = OptimizerState.for_params(np.zeros(4), weight_decay=0.0)
    adamw_step(np.zeros(4), state, g)
    assert state.last_grad_norm == 100.0
    assert state.m[0] == pytest.approx(0.1 * 10.0)


def test_adamw_first_step_and_decay():
    p = np.ones(3)
    state = OptimizerState.for_params(p, lr=0.1, weight_decay=0.5, clip=None)
    adamw_step(p, state, np.array([2.0, -3.0, 0.0]))
    # bias-corrected first step moves by lr * sign(g), after decoupled decay
    assert np.allclose(p, [0.95 - 0.1, 0.95 + 0.1, 0.95], atol=1e-8)


def test_adamw_determinism_and_errors():
    g = np.random.default_rng(11).standard_normal(6)
    a, b = np.zeros(6), np.zeros(6)
    sa, sb = OptimizerState.for_params(a), OptimizerState.for_params(b)
    for _ in range(3):
        adamw_step(a, sa, g)
        adamw_step(b, sb, g)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(DivergenceError):
        adamw_step(a, sa, np.full(6, np.nan))


def test_affine_regression_converges():
    # target velocity is affine in x, which the network can represent closely
    rng = np.random.default_rng(12)
    net = VelocityNet(2, hidden=32, n_layers=2, embed_dim=8, freq_range=(1.0, 4.0), seed=1)
    x = rng.standard_normal((256, 2))
    t = rng.random(256)
    target = 0.3 * x + 0.1
    state = OptimizerState.for_params(net.params, lr=3e-3, weight_decay=0.0)
    for _ in range(2000):
        loss, g = net.loss_and_grad(x, target, t)
        adamw_step(net.params, state, g)
    assert net.loss(x, target, t) < 1e-4
