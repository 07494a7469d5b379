import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmu import autodiff as ad
from helpers import numerical_grad, rel_error


def param(arr, name="p"):
    return ad.Parameter(np.array(arr, dtype=float), name)


def grad_of(build, *params):
    """Adjoints of ``params`` after one backward through ``build()``."""
    for p in params:
        p.zero_adjoint()
    with ad.Tape() as tape:
        loss = build()
    tape.backward(loss)
    return [ad.read_adjoint(p) for p in params]


def value_of(build):
    return float(build().value[0, 0])


def sum_weighted(t, weights):
    # scalar probe: <t, weights> expressed with tape ops only
    ones = ad.constant(np.ones((weights.shape[1], 1)))
    flat = ad.matmul(ad.hadamard(t, ad.constant(weights)), ones)
    return ad.matmul(ad.constant(np.ones((1, weights.shape[0]))), flat)


def check_fd(build, *params, tol=1e-4):
    analytic = grad_of(build, *params)
    for p, a in zip(params, analytic):
        numeric = numerical_grad(lambda: value_of(build), p.value)
        assert rel_error(a, numeric) < tol, p.name


# -- values ----------------------------------------------------------------


def test_matmul_identity_and_hand_case():
    v = np.random.default_rng(0).normal(size=(2, 3))
    out = ad.matmul(ad.constant(np.eye(2)), ad.constant(v))
    np.testing.assert_array_equal(out.value, v)
    out = ad.matmul(ad.constant([[1.0, 2.0], [3.0, 4.0]]), ad.constant([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.value, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ad.AutodiffError):
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))


def test_hadamard_ones_and_scale_zero():
    v = param([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(ad.hadamard(v, ad.constant(np.ones((1, 3)))).value, v.value)
    w = np.array([[0.3, -0.7, 1.1]])
    (g,) = grad_of(lambda: sum_weighted(ad.scale(v, 0.0), w), v)
    np.testing.assert_array_equal(g, np.zeros((1, 3)))
    np.testing.assert_array_equal(ad.scale(v, 0.0).value, np.zeros((1, 3)))


def test_elementwise_shape_mismatch():
    a, b = ad.constant(np.ones((2, 3))), ad.constant(np.ones((3, 2)))
    for op in (ad.add, ad.sub, ad.hadamard):
        with pytest.raises(ad.AutodiffError):
            op(a, b)


def test_activation_values():
    assert ad.sigmoid(ad.constant(0.0)).value[0, 0] == 0.5
    assert ad.tanh(ad.constant(0.0)).value[0, 0] == 0.0
    big = ad.sigmoid(ad.constant([[50.0, 700.0, -700.0]])).value
    assert abs(big[0, 0] - 1.0) < 1e-15
    assert big[0, 1] == 1.0
    assert 0.0 <= big[0, 2] < 1e-300
    assert np.all(np.isfinite(big))


def test_concat_shapes_and_roundtrip():
    a = param(np.arange(2.0).reshape(1, 2), "a")
    b = param(np.arange(5.0).reshape(1, 5), "b")
    c = ad.concat(a, b)
    assert c.shape == (1, 7)
    np.testing.assert_array_equal(ad.columns(c, 0, 2).value, a.value)
    np.testing.assert_array_equal(ad.columns(c, 2, 7).value, b.value)
    with pytest.raises(ad.AutodiffError):
        ad.concat(ad.constant(np.ones((2, 2))), ad.constant(np.ones((3, 2))))


def test_losses():
    v = ad.constant([[0.5, -1.0]])
    assert ad.mse_loss(v, v.value).value[0, 0] == 0.0
    ce = ad.cross_entropy_loss(ad.constant(np.zeros((1, 8))), [3])
    assert ce.value[0, 0] == pytest.approx(np.log(8), abs=1e-12)
    with pytest.raises(ad.AutodiffError):
        ad.cross_entropy_loss(ad.constant(np.zeros((1, 8))), [8])
    # extreme logits stay finite
    ce = ad.cross_entropy_loss(ad.constant([[1000.0, -1000.0]]), [1])
    assert ce.value[0, 0] == pytest.approx(2000.0)


# -- gradients against central finite differences -------------------------


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def test_matmul_grad(rng):
    a = param(rng.uniform(-2, 2, (3, 4)), "a")
    b = param(rng.uniform(-2, 2, (4, 2)), "b")
    w = rng.normal(size=(3, 2))
    check_fd(lambda: sum_weighted(ad.matmul(a, b), w), a, b, tol=1e-6)


def test_affine_grad(rng):
    x = param(rng.uniform(-2, 2, (5, 3)), "x")
    w = param(rng.uniform(-2, 2, (3, 4)), "w")
    b = param(rng.uniform(-2, 2, (1, 4)), "b")
    wt = rng.normal(size=(5, 4))
    check_fd(lambda: sum_weighted(ad.affine(x, w, b), wt), x, w, b)


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.hadamard])
def test_binary_grads(rng, op):
    a = param(rng.uniform(-2, 2, (3, 4)), "a")
    b = param(rng.uniform(-2, 2, (3, 4)), "b")
    w = rng.normal(size=(3, 4))
    check_fd(lambda: sum_weighted(op(a, b), w), a, b)


@pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh, ad.one_minus, lambda t: ad.scale(t, -1.7)])
def test_unary_grads(rng, op):
    a = param(rng.uniform(-2, 2, (3, 4)), "a")
    w = rng.normal(size=(3, 4))
    check_fd(lambda: sum_weighted(op(a), w), a)


def test_concat_and_columns_grads(rng):
    a = param(rng.uniform(-2, 2, (3, 2)), "a")
    b = param(rng.uniform(-2, 2, (3, 5)), "b")
    w = rng.normal(size=(3, 4))
    check_fd(lambda: sum_weighted(ad.columns(ad.concat(a, b), 1, 5), w), a, b)
    w2 = rng.normal(size=(6, 2))
    check_fd(lambda: sum_weighted(ad.concat(a, ad.columns(b, 0, 2), axis=0), w2), a, b)


def test_loss_grads(rng):
    pred = param(rng.uniform(-2, 2, (4, 3)), "pred")
    target = rng.uniform(-2, 2, (4, 3))
    check_fd(lambda: ad.mse_loss(pred, target), pred)
    logits = param(rng.uniform(-2, 2, (5, 8)), "logits")
    idx = rng.integers(0, 8, size=5)
    check_fd(lambda: ad.cross_entropy_loss(logits, idx), logits)


def test_probe_passes_value_and_exposes_scaled_gradient(rng):
    h = param(rng.uniform(-2, 2, (2, 3)), "h")
    w = rng.normal(size=(2, 3))
    with ad.Tape() as tape:
        scaled, out = ad.probe(h, 0.4)
        loss = sum_weighted(out, w)
    np.testing.assert_array_equal(out.value, h.value)
    tape.backward(loss)
    np.testing.assert_allclose(ad.read_adjoint(scaled), w / 0.4, rtol=1e-15)
    np.testing.assert_allclose(ad.read_adjoint(h), w, rtol=1e-15)


# -- backward semantics ----------------------------------------------------


def test_square_derivative():
    x = param([[3.0]], "x")
    (g,) = grad_of(lambda: ad.hadamard(x, x), x)
    assert g[0, 0] == 6.0


def test_tanh_chain_of_ten(rng):
    x = param(rng.uniform(-2, 2, (2, 3)), "x")
    w = rng.normal(size=(2, 3))

    def build():
        t = x
        for _ in range(10):
            t = ad.tanh(ad.scale(t, 1.3))
        return sum_weighted(t, w)

    check_fd(build, x)


def test_unreached_node_and_loss_adjoint():
    x = param([[0.5]], "x")
    with ad.Tape() as tape:
        dangling = ad.tanh(x)
        loss = ad.hadamard(x, x)
    tape.backward(loss)
    assert ad.read_adjoint(dangling)[0, 0] == 0.0
    assert ad.read_adjoint(loss)[0, 0] == 1.0


def test_constant_branch_gets_no_adjoint():
    c = ad.constant([[2.0]])
    x = param([[0.5]], "x")
    with ad.Tape() as tape:
        loss = ad.hadamard(ad.tanh(c), x)
    tape.backward(loss)
    assert ad.read_adjoint(c)[0, 0] == 0.0


def test_interior_node_matches_hand_derivative():
    # y = sigmoid(w x); d y / d(w x) = sigmoid'(w x); d y / d x = w sigmoid'(w x)
    w, x0 = 0.7, -1.3
    x = param([[x0]], "x")
    with ad.Tape() as tape:
        wx = ad.scale(x, w)
        y = ad.sigmoid(wx)
    tape.backward(y)
    s = 1.0 / (1.0 + np.exp(-w * x0))
    assert ad.read_adjoint(wx)[0, 0] == pytest.approx(s * (1 - s), rel=1e-14)
    assert ad.read_adjoint(x)[0, 0] == pytest.approx(w * s * (1 - s), rel=1e-14)


def test_read_before_backward_and_double_backward():
    x = param([[1.0]], "x")
    with ad.Tape() as tape:
        loss = ad.hadamard(x, x)
    with pytest.raises(ad.AutodiffError):
        ad.read_adjoint(loss)
    tape.backward(loss)
    with pytest.raises(ad.AutodiffError):
        tape.backward(loss)


def test_non_scalar_root_rejected():
    x = param([[1.0, 2.0]], "x")
    with ad.Tape() as tape:
        y = ad.tanh(x)
    with pytest.raises(ad.AutodiffError):
        tape.backward(y)


def test_no_tape_means_no_graph():
    x = param([[1.0]], "x")
    y = ad.tanh(x)
    assert y.tape is None and not y.requires_grad


def test_adjoints_zero_before_backward():
    x = param(np.ones((2, 2)), "x")
    with ad.Tape():
        y = ad.tanh(ad.hadamard(x, x))
    assert y.adjoint.shape == y.value.shape
    assert not np.any(y.adjoint)


@pytest.mark.parametrize("alpha", [0.5, 2.0, -1.0])
def test_backward_is_linear(rng, alpha):
    x = param(rng.uniform(-2, 2, (3, 3)), "x")
    w = rng.normal(size=(3, 3))
    (base,) = grad_of(lambda: sum_weighted(ad.sigmoid(x), w), x)
    x.zero_adjoint()
    (scaled,) = grad_of(lambda: ad.scale(sum_weighted(ad.sigmoid(x), w), alpha), x)
    np.testing.assert_allclose(scaled, alpha * base, rtol=1e-14)


def test_reset_gives_identical_adjoints(rng):
    x = param(rng.uniform(-2, 2, (3, 3)), "x")
    w = rng.normal(size=(3, 3))
    with ad.Tape() as tape:
        loss = sum_weighted(ad.tanh(ad.hadamard(x, x)), w)
    tape.backward(loss)
    first = ad.read_adjoint(x)
    tape.reset()
    assert not np.any(x.adjoint)
    tape.backward(loss)
    np.testing.assert_array_equal(ad.read_adjoint(x), first)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_random_composite_matches_fd(rows, cols, seed):
    r = np.random.default_rng(seed)
    a = param(r.uniform(-2, 2, (rows, cols)), "a")
    b = param(r.uniform(-2, 2, (rows, cols)), "b")
    w = r.normal(size=(rows, cols))
    check_fd(lambda: sum_weighted(
        ad.add(ad.hadamard(ad.sigmoid(a), ad.tanh(b)), ad.one_minus(ad.sigmoid(b))), w), a, b)
