"""Linear / BatchNorm1d / Mlp blocks and the Adam optimizer."""

import numpy as np
import pytest

from genagg.nn import BatchNorm1d, Linear, Mlp, batch_norm
from genagg.optim import Adam
from genagg.tensor import AutodiffError, Tensor, backward, mish, rng_stream


def test_linear_forward_matches_numpy():
    rng = rng_stream(0, "nn")
    lin = Linear(3, 2, rng)
    x = rng.standard_normal((5, 3))
    out = lin(Tensor(x))
    assert np.allclose(out.values, x @ lin.w.values + lin.b.values)
    assert lin.w.shape == (3, 2) and lin.b.shape == (1, 2)
    assert np.all(lin.b.values == 0.0)


def test_linear_without_bias():
    lin = Linear(3, 2, rng_stream(1, "nn"), bias=False)
    assert lin.b is None
    assert len(lin.parameters()) == 1


def test_batch_norm_training_statistics():
    rng = rng_stream(2, "nn")
    bn = BatchNorm1d(3)
    x = rng.standard_normal((64, 3)) * 2.0 + 1.0
    out = bn(Tensor(x))
    mu = x.mean(axis=0)
    var = x.var(axis=0)  # population variance
    expect = (x - mu) / np.sqrt(var + bn.eps)
    assert np.allclose(out.values, expect, atol=1e-10)
    # running estimates take one momentum step from (0, 1)
    assert np.allclose(bn.running_mean, 0.1 * mu)
    assert np.allclose(bn.running_var, 0.9 * 1.0 + 0.1 * var)


def test_batch_norm_eval_uses_running_stats():
    bn = BatchNorm1d(2)
    bn.running_mean = np.array([[1.0, -1.0]])
    bn.running_var = np.array([[4.0, 0.25]])
    bn.training = False
    x = np.array([[3.0, 0.0], [1.0, -1.0]])
    out = bn(Tensor(x))
    expect = (x - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
    assert np.allclose(out.values, expect)
    # eval mode must not touch the running estimates
    assert bn.running_mean[0, 0] == 1.0


def test_batch_norm_affine_params_receive_grads():
    bn = BatchNorm1d(2)
    x = Tensor(rng_stream(3, "nn").standard_normal((8, 2)), requires_grad=True)
    backward((bn(x) * 2.0).sum())
    assert bn.gamma.grad is not None and bn.beta.grad is not None
    assert np.allclose(bn.beta.grad, np.full((1, 2), 2.0 * 8))


def test_mlp_structure_and_param_count():
    f = Mlp([1, 2, 2, 4], rng_stream(4, "nn"))
    # linears: 1*2+2 + 2*2+2 + 2*4+4 = 22, bn affines: 2*(2+2) = 8
    assert f.n_params() == 30
    finv = Mlp([4, 2, 2, 1], rng_stream(5, "nn"))
    assert finv.n_params() == 8 + 2 + 4 + 2 + 2 + 1 + 8

    keys = set(f.named_parameters())
    assert keys == {
        "lin0.w", "lin0.b", "lin1.w", "lin1.b", "lin2.w", "lin2.b",
        "bn0.gamma", "bn0.beta", "bn1.gamma", "bn1.beta",
    }


def test_mlp_forward_matches_manual_composition():
    rng = rng_stream(6, "nn")
    net = Mlp([2, 3, 1], rng)
    x = rng.standard_normal((10, 2))
    out = net(Tensor(x))

    h = Tensor(x) @ net.linears[0].w + Tensor(np.broadcast_to(net.linears[0].b.values, (10, 3)).copy())
    h = mish(batch_norm(h, net.norms[0], True))
    expect = h @ net.linears[1].w + Tensor(np.broadcast_to(net.linears[1].b.values, (10, 1)).copy())
    assert np.allclose(out.values, expect.values)


def test_mlp_train_eval_toggles_norms():
    net = Mlp([1, 2, 1], rng_stream(7, "nn"))
    net.eval()
    assert not net.training and not net.norms[0].training
    net.train()
    assert net.training and net.norms[0].training


def test_mlp_eval_is_deterministic_function():
    rng = rng_stream(8, "nn")
    net = Mlp([1, 2, 1], rng)
    x = rng.standard_normal((4, 1))
    net.eval()
    a = net(Tensor(x)).values
    b = net(Tensor(x)).values
    assert np.array_equal(a, b)


# Adam -------------------------------------------------------------------------


def test_adam_first_step_is_signed_lr():
    # with m=g, v=g^2 the first update is -lr * g / (|g| + eps)
    p = Tensor(np.array([[1.0, 1.0]]), requires_grad=True)
    opt = Adam([p], lr=1e-3)
    p.grad = np.array([[1.0, -0.2]])
    opt.step()
    assert p.values[0, 0] == pytest.approx(1.0 - 0.0009999999900000003, abs=1e-15)
    assert p.values[0, 1] == pytest.approx(1.0 + 1e-3 * 0.2 / (0.2 + 1e-8), abs=1e-15)
    assert p.grad is None  # step consumes gradients


def test_adam_missing_grad_is_an_error():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    opt = Adam([p])
    with pytest.raises(AutodiffError):
        opt.step()


def test_adam_converges_on_quadratic():
    p = Tensor(np.array([[4.0]]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(400):
        loss = (p * p).sum()
        backward(loss)
        opt.step()
    assert abs(p.values[0, 0]) < 1e-3


def test_adam_zero_grad():
    p = Tensor(np.ones((1, 1)), requires_grad=True)
    p.grad = np.ones((1, 1))
    Adam([p]).zero_grad()
    assert p.grad is None
