import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddad import functional as F
from ddad.errors import NonFiniteError, ShapeError
from ddad.gradcheck import finite_difference_gradient, relative_error
from ddad.tensor import Tensor, backward, log_softmax, no_grad, softmax, tape


def test_relu_definition():
    np.testing.assert_array_equal(Tensor([-1.0, 0.0, 2.0]).relu().data, [0.0, 0.0, 2.0])


def test_matmul_identity():
    a = np.random.default_rng(0).standard_normal((3, 3))
    np.testing.assert_array_equal((Tensor(np.eye(3)) @ Tensor(a)).data, a)


def test_conv_of_ones_sums_window():
    out = F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), padding=0)
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 9.0


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 6, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for n in range(2):
        for o in range(4):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    ref[n, o, i, j] = (xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]).sum() + b[o]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_deconv_is_adjoint_of_conv():
    # <conv(x), y> == <x, deconv(y)> for the same weights
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 4, 4))
    y = F.conv2d(Tensor(x), Tensor(w), stride=2, padding=1)
    r = rng.standard_normal(y.shape)
    back = F.conv_transpose2d(Tensor(r), Tensor(w), stride=2, padding=1)
    assert back.shape == x.shape
    np.testing.assert_allclose((y.data * r).sum(), (x * back.data).sum(), rtol=1e-12)


def test_upsample_nearest_repeats_pixels():
    x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
    out = F.upsample_nearest(x, 2).data[0, 0]
    np.testing.assert_array_equal(out, [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 5)))
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))


def test_non_finite_input_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        Tensor([1000.0]).exp()


class TestSoftmax:
    def test_equal_logits_uniform(self):
        p = softmax(Tensor(np.full((2, 5), 3.0)), tau=0.7).data
        np.testing.assert_allclose(p, 0.2, atol=1e-15)

    def test_two_class_value(self):
        p = softmax(Tensor([[2.0, 0.0]]), tau=2.0).data[0]
        e = np.e
        np.testing.assert_allclose(p, [e / (e + 1), 1 / (e + 1)], rtol=1e-14)
        np.testing.assert_allclose(p, [0.7311, 0.2689], atol=1e-4)

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            softmax(Tensor([[1.0, 2.0]]), tau=0.0)

    def test_large_logits_are_stable(self):
        p = softmax(Tensor([[1000.0, 0.0, -1000.0]])).data
        np.testing.assert_allclose(p.sum(), 1.0, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10_000), tau=st.floats(0.05, 20.0),
           n=st.integers(1, 6), k=st.integers(2, 8))
    def test_rows_sum_to_one_and_argmax_invariant(self, seed, tau, n, k):
        z = np.random.default_rng(seed).normal(scale=5.0, size=(n, k))
        p = softmax(Tensor(z), tau).data
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(p.argmax(axis=1), z.argmax(axis=1))


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_half_mean_square(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward((x * x).mean() / 2)
        np.testing.assert_allclose(x.grad, [1 / 3, 2 / 3, 1.0], rtol=1e-15)

    def test_unused_parameter_gets_no_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        unused = Tensor([5.0], requires_grad=True)
        backward(x.sum())
        assert unused.grad is None or np.all(unused.grad == 0)

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            backward(x * 2)

    def test_reused_subgraph_doubles_gradient_exactly(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        x = Tensor(rng.standard_normal((5, 4)))

        def f():
            return ((x @ w).tanh() * 1.7).sum()

        backward(f())
        once = w.grad.copy()
        w.grad = None
        backward(f() + f())
        np.testing.assert_array_equal(w.grad, 2 * once)

    def test_backward_twice_accumulates(self):
        x = Tensor([0.5, -1.5], requires_grad=True)
        loss = (x * x).sum()
        backward(loss)
        backward(loss)
        np.testing.assert_array_equal(x.grad, 2 * (2 * x.data))

    def test_tape_is_topological(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = (x * 2).relu()
        z = (y + x).sum()
        nodes = tape(z)
        position = {id(n): i for i, n in enumerate(nodes)}
        for node in nodes:
            for parent in node._parents:
                if parent.requires_grad:
                    assert position[id(parent)] < position[id(node)]
        assert len(position) == len(nodes)

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 3
        assert not y.requires_grad


class TestFiniteDifferences:
    def test_sum_is_all_ones(self):
        g = finite_difference_gradient(lambda t: t.sum(), Tensor(np.ones((2, 3))))
        np.testing.assert_allclose(g.data, 1.0, rtol=1e-9)

    def test_constant_is_zero(self):
        g = finite_difference_gradient(lambda t: Tensor(4.0), Tensor(np.ones(5)))
        np.testing.assert_array_equal(g.data, 0.0)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda t: t.sum(), Tensor([1.0]), h=0)


def test_relative_error_uses_floor():
    assert relative_error([0.0], [0.0]) == 0.0
    assert relative_error([1.0], [1.0 + 1e-6]) == pytest.approx(1e-6, rel=1e-3)


def test_log_softmax_matches_log_of_softmax():
    z = Tensor(np.random.default_rng(4).standard_normal((3, 4)))
    np.testing.assert_allclose(log_softmax(z, 1.5).data, np.log(softmax(z, 1.5).data), rtol=1e-12)
