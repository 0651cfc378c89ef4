"""Randomized gradient-check cases shared by the unit and acceptance suites.

Each builder takes an rng and returns ``(f, inputs)``: ``f`` maps a list of
tensors to a scalar tensor. Outputs are contracted with a fixed random
projection so every gradient entry is generically nonzero.
"""
import numpy as np

from ddad import functional as F
from ddad import losses as L
from ddad.batchnorm import BNLayerRecord, batchnorm_forward
from ddad.gradcheck import finite_difference_gradient, relative_error
from ddad.models import NetworkSpec, Network, forward_with_bn_capture
from ddad.tensor import Tensor, backward, concat, log_softmax, scale, softmax, sqrt, transpose

H = 1e-5
TOL = 1e-4


def _away_from_zero(rng, shape, low=0.05):
    x = rng.uniform(low, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _proj(rng, out_fn):
    """Wrap ``out_fn`` so the scalar is <out, R> for a fixed random R."""
    cache = {}

    def f(ts):
        out = out_fn(ts)
        if "r" not in cache:
            cache["r"] = Tensor(rng.standard_normal(out.shape))
        return (out * cache["r"]).sum()

    return f


def case_add(rng):
    return _proj(rng, lambda t: t[0] + t[1]), [rng.standard_normal((3, 4)),
                                              rng.standard_normal((1, 4))]


def case_sub(rng):
    return _proj(rng, lambda t: t[0] - t[1]), [rng.standard_normal((2, 3)),
                                              rng.standard_normal((3,))]


def case_mul(rng):
    return _proj(rng, lambda t: t[0] * t[1]), [rng.standard_normal((3, 1)),
                                              rng.standard_normal((3, 5))]


def case_div(rng):
    return _proj(rng, lambda t: t[0] / t[1]), [rng.standard_normal((2, 3)),
                                              _away_from_zero(rng, (2, 3), 0.5)]


def case_scale_neg(rng):
    c = float(rng.normal())
    return _proj(rng, lambda t: -scale(t[0], c)), [rng.standard_normal((4,))]


def case_matmul(rng):
    n, k, m = rng.integers(1, 5, size=3)
    return _proj(rng, lambda t: t[0] @ t[1]), [rng.standard_normal((n, k)),
                                              rng.standard_normal((k, m))]


def case_power(rng):
    p = float(rng.choice([2.0, 3.0, -1.0, 0.5]))
    return _proj(rng, lambda t: t[0] ** p), [rng.uniform(0.3, 2.0, size=(5,))]


def case_sqrt(rng):
    return _proj(rng, lambda t: sqrt(t[0])), [rng.uniform(0.2, 3.0, size=(2, 3))]


def case_exp_log(rng):
    return _proj(rng, lambda t: t[0].exp() + t[1].log()), [
        rng.standard_normal((3,)), rng.uniform(0.2, 3.0, size=(3,))]


def case_relu(rng):
    return _proj(rng, lambda t: t[0].relu()), [_away_from_zero(rng, (3, 4))]


def case_tanh(rng):
    return _proj(rng, lambda t: t[0].tanh()), [rng.standard_normal((3, 4))]


def case_abs(rng):
    return _proj(rng, lambda t: t[0].abs()), [_away_from_zero(rng, (6,))]


def case_sum_axis(rng):
    axis = int(rng.integers(0, 3))
    return _proj(rng, lambda t: t[0].sum(axis=axis)), [rng.standard_normal((2, 3, 4))]


def case_mean_axis(rng):
    axis = [(0,), (1, 2), None][int(rng.integers(0, 3))]
    return _proj(rng, lambda t: t[0].mean(axis=axis, keepdims=True)), [
        rng.standard_normal((2, 3, 4))]


def case_reshape_transpose(rng):
    return _proj(rng, lambda t: transpose(t[0].reshape(4, 3))), [rng.standard_normal((2, 6))]


def case_concat(rng):
    return _proj(rng, lambda t: concat([t[0], t[1]], axis=1)), [
        rng.standard_normal((2, 3)), rng.standard_normal((2, 2))]


def case_softmax(rng):
    tau = float(rng.uniform(0.5, 4.0))
    return _proj(rng, lambda t: softmax(t[0], tau)), [rng.standard_normal((3, 4))]


def case_log_softmax(rng):
    tau = float(rng.uniform(0.5, 4.0))
    return _proj(rng, lambda t: log_softmax(t[0], tau)), [rng.standard_normal((3, 4))]


def case_conv2d(rng):
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    return _proj(rng, lambda t: F.conv2d(t[0], t[1], t[2], stride, pad)), [
        rng.standard_normal((2, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3)),
        rng.standard_normal(3)]


def case_deconv(rng):
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    return _proj(rng, lambda t: F.conv_transpose2d(t[0], t[1], t[2], stride, pad)), [
        rng.standard_normal((2, 2, 3, 3)), rng.standard_normal((2, 3, 4, 4)),
        rng.standard_normal(3)]


def case_upsample(rng):
    return _proj(rng, lambda t: F.upsample_nearest(t[0], 2)), [rng.standard_normal((1, 2, 3, 2))]


def case_pool(rng):
    return _proj(rng, lambda t: F.global_avg_pool(t[0])), [rng.standard_normal((2, 3, 3, 3))]


def _bn_case(rng, shape, training, frozen=False):
    c = shape[1]

    def f(t):
        rec = BNLayerRecord(c)
        rec.stored_mean = np.linspace(-0.3, 0.3, c)
        rec.stored_var = np.linspace(0.5, 1.5, c)
        rec.frozen = frozen
        rec.scale, rec.shift = t[1], t[2]
        return batchnorm_forward(t[0], rec, training)

    return _proj(rng, f), [rng.standard_normal(shape), rng.uniform(0.5, 1.5, c),
                           rng.standard_normal(c)]


def case_bn_train_flat(rng):
    return _bn_case(rng, (6, 3), True)


def case_bn_train_spatial(rng):
    return _bn_case(rng, (3, 2, 2, 2), True)


def case_bn_eval(rng):
    return _bn_case(rng, (4, 3), False)


def case_cross_entropy(rng):
    labels = rng.integers(0, 4, size=5)
    return (lambda t: L.cross_entropy(t[0], labels)), [rng.standard_normal((5, 4))]


def case_kd_loss(rng):
    labels = rng.integers(0, 3, size=4)
    teacher = rng.standard_normal((4, 3))
    tau, lam = float(rng.uniform(1.0, 4.0)), float(rng.uniform(0.1, 2.0))
    return (lambda t: L.kd_loss(t[0], Tensor(teacher), labels, tau, lam)), [
        rng.standard_normal((4, 3))]


def case_soft_kl(rng):
    teacher = rng.standard_normal((3, 5))
    return (lambda t: L.soft_kl(Tensor(teacher), t[0], 2.0)), [rng.standard_normal((3, 5))]


def case_gaussian_kl(rng):
    mu_p = rng.normal(size=4)
    var_p = rng.uniform(0.2, 3.0, size=4)
    return (lambda t: L.gaussian_kl(mu_p, var_p, t[0], t[1]).sum()), [
        rng.normal(size=4), rng.uniform(0.2, 3.0, size=4)]


def _tiny_net(rng, dims=(3, 5, 4, 3)):
    layers = []
    for out in dims[1:-1]:
        layers += [{"type": "linear", "out": out}, {"type": "bn"}, {"type": "relu"}]
    layers.append({"type": "linear", "out": dims[-1]})
    net = Network(NetworkSpec(layers, (dims[0],)), seed=int(rng.integers(1 << 30)))
    for rec in net.bn_records:
        rec.stored_mean = rng.normal(scale=0.3, size=rec.channel_count)
        rec.stored_var = rng.uniform(0.5, 2.0, size=rec.channel_count)
    return net


def case_bn_divergence(rng):
    """Statistic-matching loss, differentiated w.r.t. the frozen teacher's input."""
    net = _tiny_net(rng).freeze()

    def f(t):
        _, records = forward_with_bn_capture(net, t[0])
        return L.bn_divergence_loss(records)

    return f, [rng.standard_normal((6, 3))]


def case_discrepancy(rng):
    teacher = softmax(Tensor(rng.standard_normal((4, 3)) * 2)).data
    return (lambda t: L.discrepancy_loss(Tensor(teacher), softmax(t[0], 1.5))), [
        rng.standard_normal((4, 3))]


def case_student_mae(rng):
    teacher = softmax(Tensor(rng.standard_normal((4, 3)) * 2)).data
    return (lambda t: L.student_distill_loss(Tensor(teacher), softmax(t[0]))), [
        rng.standard_normal((4, 3))]


def case_generator_objective(rng):
    """Weighted combination, through a frozen teacher and frozen student."""
    teacher = _tiny_net(rng).freeze().train()
    student = _tiny_net(rng, (3, 4, 3)).freeze().eval()
    delta, gamma = float(rng.uniform(0, 0.1)), float(rng.uniform(0, 1))

    def f(t):
        logits, records = forward_with_bn_capture(teacher, t[0])
        disc = L.discrepancy_loss(softmax(logits), softmax(student(t[0])))
        return L.generator_loss(L.bn_divergence_loss(records), disc, delta, gamma)

    return f, [rng.standard_normal((5, 3))]


def case_bn_network_params(rng):
    """Two BN layers in training mode, gradient w.r.t. the first weight matrix and BN scale."""
    net = _tiny_net(rng)
    x = rng.standard_normal((6, 3))
    labels = rng.integers(0, 3, size=6)
    w0, s1 = net.params["0.weight"].data.copy(), net.params["1.scale"].data.copy()

    def f(t):
        net.params["0.weight"] = t[0]
        net.bn_records[0].scale = t[1]
        return L.cross_entropy(net(x), labels)

    return f, [w0, s1]


BUILDERS = [v for k, v in sorted(globals().items()) if k.startswith("case_")]


def iter_cases(repeats: int = 3, seed: int = 2024):
    rng = np.random.default_rng(seed)
    for r in range(repeats):
        for builder in BUILDERS:
            yield f"{builder.__name__[5:]}[{r}]", builder, np.random.default_rng(rng.integers(1 << 31))


def check_case(builder, rng, h: float = H) -> float:
    """Worst relative error between backward() and central differences over all inputs."""
    f, arrays = builder(rng)
    inputs = [Tensor(a, requires_grad=True) for a in arrays]
    backward(f(inputs))
    worst = 0.0
    for i, a in enumerate(arrays):
        analytic = inputs[i].grad if inputs[i].grad is not None else np.zeros_like(a)

        def fi(x, i=i):
            ts = [Tensor(b) for b in arrays]
            ts[i] = x
            return f(ts)

        numeric = finite_difference_gradient(fi, Tensor(a), h).data
        worst = max(worst, relative_error(analytic, numeric))
    return worst
