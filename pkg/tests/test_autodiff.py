import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windwatch import autodiff as ad

from oracles import central_difference


def backward_of(build, *arrays):
    """Run build(*tensors) under a tape and return (loss value, grads)."""
    tensors = [ad.Tensor(a, requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        loss = build(*tensors)
    tape.backward(loss)
    return loss, [t.grad_or_zeros() for t in tensors]


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Tensor(0.0)).value == 0.5


def test_elu_saturates_to_minus_one():
    y = ad.elu(ad.Tensor(-20.0)).value
    assert abs(y - (np.exp(-20.0) - 1.0)) < 1e-15
    assert abs(y + 1.0) < 1e-8


def test_clamp_gradient_inside_and_outside():
    _, (g,) = backward_of(lambda x: ad.reduce_sum(ad.clamp(x, 0.0, 1.0)),
                          np.array([0.5, -0.3, 1.7]))
    assert g.tolist() == [1.0, 0.0, 0.0]


def test_square_gradient_matches_central_difference():
    def build(x):
        return ad.reduce_sum(ad.mul(x, x))

    _, (g,) = backward_of(build, np.array([3.0]))
    assert g[0] == pytest.approx(6.0, rel=1e-12)

    cd = central_difference(lambda v: float(np.sum(v * v)), np.array([3.0]))
    assert abs(g[0] - cd[0]) / max(abs(g[0]), abs(cd[0])) < 1e-8


def test_constant_loss_gives_zero_gradient():
    x = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with ad.Tape() as tape:
        loss = ad.reduce_sum(ad.Tensor(np.array([5.0])))
    tape.backward(loss)
    assert np.all(x.grad_or_zeros() == 0.0)


def test_linear_mean_gradient_closed_form():
    x = np.array([[1.0], [2.0], [4.0]])  # (3, 1)
    w = np.array([[2.0]])

    def build(t):
        return ad.reduce_mean(ad.matmul(ad.Tensor(x), t))

    _, (g,) = backward_of(build, w)
    # d mean(x @ w) / dw = mean(x)
    assert g[0, 0] == pytest.approx(x.mean(), abs=1e-15)


PRIMITIVES = {
    "add": lambda a, b: ad.add(a, b),
    "sub": lambda a, b: ad.sub(a, b),
    "mul": lambda a, b: ad.mul(a, b),
    "matmul": lambda a, b: ad.matmul(a, b),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_binary_primitive_gradients(name):
    rng = np.random.default_rng(7)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4)) if name != "matmul" else rng.normal(size=(4, 2))
    op = PRIMITIVES[name]

    def build(ta, tb):
        return ad.reduce_mean(ad.mul(op(ta, tb), op(ta, tb)))

    _, grads = backward_of(build, a, b)

    def scalar(arrs):
        y = arrs[0] @ arrs[1] if name == "matmul" else {
            "add": arrs[0] + arrs[1],
            "sub": arrs[0] - arrs[1],
            "mul": arrs[0] * arrs[1],
        }[name]
        return float(np.mean(y * y))

    for i, arr in enumerate((a, b)):
        cd = central_difference(lambda v, i=i: scalar([v if i == 0 else a, v if i == 1 else b]), arr.copy())
        assert np.max(np.abs(grads[i] - cd)) < 1e-6


@pytest.mark.parametrize("name,fn,ref", [
    ("sigmoid", ad.sigmoid, lambda x: 1.0 / (1.0 + np.exp(-x))),
    ("tanh", ad.tanh, np.tanh),
    ("relu", ad.relu, lambda x: np.maximum(x, 0.0)),
    ("elu", ad.elu, lambda x: np.where(x >= 0, x, np.expm1(x))),
])
def test_unary_primitive_gradients(name, fn, ref):
    rng = np.random.default_rng(11)
    x = rng.normal(size=(5, 3)) + 0.2  # keep away from relu kink

    def build(t):
        return ad.reduce_mean(fn(t))

    _, (g,) = backward_of(build, x)
    cd = central_difference(lambda v: float(np.mean(ref(v))), x.copy())
    assert np.max(np.abs(g - cd)) < 1e-6


def test_broadcast_add_gradient_sums_over_batch():
    x = np.ones((4, 3))
    b = np.zeros(3)

    def build(tb):
        return ad.reduce_sum(ad.add(ad.Tensor(x), tb))

    _, (g,) = backward_of(build, b)
    assert np.all(g == 4.0)


def test_concat_stack_take_reshape_roundtrip_gradients():
    a = np.arange(6.0).reshape(2, 3)
    b = np.arange(6.0, 12.0).reshape(2, 3)

    def build(ta, tb):
        c = ad.concat([ta, tb], axis=1)           # (2, 6)
        s = ad.stack([ta, tb], axis=0)            # (2, 2, 3)
        piece = ad.take(c, (slice(None), slice(0, 3)))
        flat = ad.reshape(s, (4, 3))
        return ad.add(ad.reduce_sum(piece), ad.reduce_mean(flat))

    _, grads = backward_of(build, a, b)

    def scalar(arrs):
        c = np.concatenate(arrs, axis=1)
        s = np.stack(arrs, axis=0)
        return float(c[:, :3].sum() + s.reshape(4, 3).mean())

    for i, arr in enumerate((a, b)):
        cd = central_difference(
            lambda v, i=i: scalar([v if i == 0 else a, v if i == 1 else b]), arr.copy())
        assert np.max(np.abs(grads[i] - cd)) < 1e-7


def test_backward_is_linear_in_the_loss():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(3, 2))
    x1 = rng.normal(size=(4, 3))
    x2 = rng.normal(size=(4, 3))

    def grad_of(build):
        _, (g,) = backward_of(build, w)
        return g

    g1 = grad_of(lambda t: ad.reduce_mean(ad.matmul(ad.Tensor(x1), t)))
    g2 = grad_of(lambda t: ad.reduce_mean(ad.mul(ad.matmul(ad.Tensor(x2), t),
                                                 ad.matmul(ad.Tensor(x2), t))))
    gsum = grad_of(lambda t: ad.add(
        ad.reduce_mean(ad.matmul(ad.Tensor(x1), t)),
        ad.reduce_mean(ad.mul(ad.matmul(ad.Tensor(x2), t),
                              ad.matmul(ad.Tensor(x2), t)))))
    assert np.allclose(gsum, g1 + g2, rtol=0, atol=1e-12)


def test_backward_rejects_non_scalar_loss():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.Tape() as tape:
        y = ad.mul(x, x)
    with pytest.raises(ad.ShapeError):
        tape.backward(y)


def test_non_finite_result_raises():
    big = ad.Tensor(np.array([1e308]))
    with pytest.raises(ad.NonFiniteError):
        ad.add(big, big)


def test_matmul_shape_mismatch_raises():
    with pytest.raises(ad.ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=16))
def test_primitives_stay_finite_on_finite_inputs(values):
    x = ad.Tensor(np.array(values))
    for fn in (ad.sigmoid, ad.tanh, ad.relu, ad.elu,
               lambda t: ad.clamp(t, -10.0, 10.0), ad.reduce_sum, ad.reduce_mean):
        assert np.isfinite(np.asarray(fn(x).value)).all()


def test_grad_check_on_quadratic():
    p = ad.Tensor(np.array([3.0, -1.5]), requires_grad=True)
    err = ad.grad_check(lambda: ad.reduce_sum(ad.mul(p, p)), [p])
    assert err < 1e-8


def test_grad_check_vacuous_without_parameters():
    assert ad.grad_check(lambda: ad.Tensor(1.0), []) == 0.0
