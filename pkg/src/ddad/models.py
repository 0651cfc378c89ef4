"""Declarative networks: teacher, student and generator.

A :class:`NetworkSpec` is a list of plain layer descriptors such as
``{"type": "linear", "out": 64}``. :func:`build_network` validates that the
layers chain (inferring every intermediate shape) and instantiates the
parameters; the result is a :class:`Network` that owns its parameters, BN
records and train/eval mode.
"""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import functional as F
from .batchnorm import BNLayerRecord, batchnorm_forward
from .errors import ModeError, ShapeError, SpecError
from .tensor import Tensor, as_tensor

LAYER_TYPES = ("linear", "conv", "deconv", "bn", "relu", "tanh", "upsample", "reshape", "pool")


@dataclass
class NetworkSpec:
    layers: list[dict]
    input_shape: tuple[int, ...]
    name: str = "net"

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [dict(layer) for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(layers=[dict(layer) for layer in d["layers"]],
                   input_shape=tuple(d["input_shape"]), name=d.get("name", "net"))


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def infer_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Per-sample output shape of every layer; raises SpecError on the first bad one."""
    shape = tuple(int(s) for s in spec.input_shape)
    if not shape or any(s < 1 for s in shape):
        raise SpecError(f"invalid input shape {spec.input_shape}")
    shapes = []
    for i, layer in enumerate(spec.layers):
        kind = layer.get("type")
        if kind not in LAYER_TYPES:
            raise SpecError(f"unknown layer type {kind!r}", i)
        if kind == "linear":
            if len(shape) != 1:
                raise SpecError(f"linear needs a flat input, got {shape}", i)
            shape = (_positive(layer, "out", i),)
        elif kind in ("conv", "deconv"):
            if len(shape) != 3:
                raise SpecError(f"{kind} needs C x H x W input, got {shape}", i)
            out = _positive(layer, "out", i)
            k = _positive(layer, "kernel", i)
            s = int(layer.get("stride", 1))
            p = int(layer.get("padding", 0))
            if s < 1 or p < 0:
                raise SpecError(f"bad stride/padding {s}/{p}", i)
            size = F.conv_output_size if kind == "conv" else F.deconv_output_size
            h, w = size(shape[1], k, s, p), size(shape[2], k, s, p)
            if h < 1 or w < 1:
                raise SpecError(f"{kind} kernel {k} does not fit input {shape}", i)
            shape = (out, h, w)
        elif kind == "bn":
            if len(shape) not in (1, 3):
                raise SpecError(f"bn needs C or C x H x W input, got {shape}", i)
        elif kind == "upsample":
            if len(shape) != 3:
                raise SpecError(f"upsample needs C x H x W input, got {shape}", i)
            f = _positive(layer, "factor", i, default=2)
            shape = (shape[0], shape[1] * f, shape[2] * f)
        elif kind == "pool":
            if len(shape) != 3:
                raise SpecError(f"pool needs C x H x W input, got {shape}", i)
            shape = (shape[0],)
        elif kind == "reshape":
            target = tuple(int(s) for s in layer.get("shape", ()))
            if not target or int(np.prod(target)) != int(np.prod(shape)):
                raise SpecError(f"cannot reshape {shape} to {target}", i)
            shape = target
        shapes.append(shape)
    return shapes


def _positive(layer: dict, key: str, index: int, default=None) -> int:
    value = layer.get(key, default)
    if value is None or int(value) < 1:
        raise SpecError(f"{layer.get('type')} needs a positive {key!r}", index)
    return int(value)


class Network:
    """A sequential network built from a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        self.shapes = infer_shapes(spec)
        self.mode = "train"
        self.frozen = False
        self.params: dict[str, Tensor] = {}
        self.bn_records: list[BNLayerRecord] = []
        self._bn_at: dict[int, BNLayerRecord] = {}
        rng = np.random.default_rng(seed)
        in_shape = tuple(spec.input_shape)
        for i, layer in enumerate(spec.layers):
            kind = layer["type"]
            if kind == "linear":
                fan_in = in_shape[0]
                self.params[f"{i}.weight"] = Tensor(
                    _kaiming_uniform(rng, (fan_in, layer["out"]), fan_in), requires_grad=True)
                self.params[f"{i}.bias"] = Tensor(np.zeros(layer["out"]), requires_grad=True)
            elif kind == "conv":
                k = layer["kernel"]
                fan_in = in_shape[0] * k * k
                self.params[f"{i}.weight"] = Tensor(
                    _kaiming_uniform(rng, (layer["out"], in_shape[0], k, k), fan_in),
                    requires_grad=True)
                self.params[f"{i}.bias"] = Tensor(np.zeros(layer["out"]), requires_grad=True)
            elif kind == "deconv":
                k = layer["kernel"]
                fan_in = in_shape[0] * k * k
                self.params[f"{i}.weight"] = Tensor(
                    _kaiming_uniform(rng, (in_shape[0], layer["out"], k, k), fan_in),
                    requires_grad=True)
                self.params[f"{i}.bias"] = Tensor(np.zeros(layer["out"]), requires_grad=True)
            elif kind == "bn":
                rec = BNLayerRecord(in_shape[0])
                self.params[f"{i}.scale"] = rec.scale
                self.params[f"{i}.shift"] = rec.shift
                self.bn_records.append(rec)
                self._bn_at[i] = rec
            in_shape = self.shapes[i]

    # -- structure -------------------------------------------------------
    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.spec.input_shape)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1] if self.shapes else self.input_shape

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, rec in self._bn_at.items():
            out[f"{i}.stored_mean"] = rec.stored_mean
            out[f"{i}.stored_var"] = rec.stored_var
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        """Every parameter and buffer, keyed by a stable name."""
        state = {name: p.data for name, p in self.params.items()}
        state.update(self.buffers())
        return dict(sorted(state.items(), key=lambda kv: _state_key(kv[0])))

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.params) | set(self.buffers())
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise SpecError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, p in self.params.items():
            if state[name].shape != p.shape:
                raise SpecError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)
        for i, rec in self._bn_at.items():
            rec.stored_mean = np.array(state[f"{i}.stored_mean"], dtype=np.float64)
            rec.stored_var = np.array(state[f"{i}.stored_var"], dtype=np.float64)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    # -- modes -------------------------------------------------------------
    def train(self) -> "Network":
        self.mode = "train"
        return self

    def eval(self) -> "Network":
        self.mode = "eval"
        return self

    def requires_grad_(self, flag: bool = True) -> "Network":
        for p in self.params.values():
            p.requires_grad = flag
            if not flag:
                p.grad = None
        return self

    def freeze(self, flag: bool = True) -> "Network":
        """Stop gradients into the parameters and updates of the BN buffers."""
        self.frozen = flag
        for rec in self.bn_records:
            rec.frozen = flag
        return self.requires_grad_(not flag)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- execution -----------------------------------------------------------
    def forward(self, x) -> Tensor:
        x = as_tensor(x)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"{self.spec.name}: expected input N x {self.input_shape}, "
                             f"got {x.shape}")
        training = self.mode == "train"
        for i, layer in enumerate(self.spec.layers):
            kind = layer["type"]
            if kind == "linear":
                x = x @ self.params[f"{i}.weight"] + self.params[f"{i}.bias"]
            elif kind == "conv":
                x = F.conv2d(x, self.params[f"{i}.weight"], self.params[f"{i}.bias"],
                             layer.get("stride", 1), layer.get("padding", 0))
            elif kind == "deconv":
                x = F.conv_transpose2d(x, self.params[f"{i}.weight"], self.params[f"{i}.bias"],
                                       layer.get("stride", 1), layer.get("padding", 0))
            elif kind == "bn":
                x = batchnorm_forward(x, self._bn_at[i], training)
            elif kind == "relu":
                x = x.relu()
            elif kind == "tanh":
                x = x.tanh()
            elif kind == "upsample":
                x = F.upsample_nearest(x, layer.get("factor", 2))
            elif kind == "pool":
                x = F.global_avg_pool(x)
            elif kind == "reshape":
                x = x.reshape((x.shape[0],) + tuple(layer["shape"]))
        return x

    __call__ = forward

    def __repr__(self) -> str:
        return (f"Network({self.spec.name!r}, params={self.num_parameters()}, "
                f"bn_layers={len(self.bn_records)}, mode={self.mode!r})")


def _state_key(name: str):
    idx, _, rest = name.partition(".")
    return int(idx), rest


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    return Network(spec, seed)


def forward_with_bn_capture(net: Network, x) -> tuple[Tensor, list[BNLayerRecord]]:
    """Run ``net`` in training mode and return logits plus fresh BN records.

    On a frozen network the stored statistics are left untouched.
    """
    if net.mode != "train":
        raise ModeError("BN capture needs the network in training mode")
    for rec in net.bn_records:
        rec.reset()
    out = net.forward(x)
    return out, list(net.bn_records)


# -- architectures ------------------------------------------------------------

def classifier_spec(input_shape: Sequence[int], num_classes: int, width: float = 1.0,
                    name: str = "classifier") -> NetworkSpec:
    """MLP (flat input) or small CNN (C x H x W input) ending in ``num_classes`` logits."""
    input_shape = tuple(int(s) for s in input_shape)
    w = lambda n: max(1, int(round(n * width)))  # noqa: E731
    if len(input_shape) == 1:
        layers = [
            {"type": "linear", "out": w(64)}, {"type": "bn"}, {"type": "relu"},
            {"type": "linear", "out": w(64)}, {"type": "bn"}, {"type": "relu"},
            {"type": "linear", "out": int(num_classes)},
        ]
    elif len(input_shape) == 3:
        layers = [
            {"type": "conv", "out": w(16), "kernel": 3, "padding": 1}, {"type": "bn"},
            {"type": "relu"},
            {"type": "conv", "out": w(32), "kernel": 3, "stride": 2, "padding": 1},
            {"type": "bn"}, {"type": "relu"},
            {"type": "pool"},
            {"type": "linear", "out": int(num_classes)},
        ]
    else:
        raise SpecError(f"no classifier template for input shape {input_shape}")
    return NetworkSpec(layers, input_shape, name)


def build_teacher(input_shape, num_classes: int, seed: int = 0, width: float = 1.0) -> Network:
    return Network(classifier_spec(input_shape, num_classes, width, "teacher"), seed)


def build_student(input_shape, num_classes: int, seed: int = 0, width: float = 0.5) -> Network:
    return Network(classifier_spec(input_shape, num_classes, width, "student"), seed)


def generator_spec(noise_dim: int, output_shape: Sequence[int], hidden: int = 64,
                   upsample: str = "nearest") -> NetworkSpec:
    """Noise-to-sample network with a final tanh.

    Image outputs start from a 4x-downsampled feature map and grow it with
    two (nearest upsample + conv) or (deconv) blocks.
    """
    output_shape = tuple(int(s) for s in output_shape)
    if len(output_shape) == 1:
        layers = [
            {"type": "linear", "out": hidden}, {"type": "bn"}, {"type": "relu"},
            {"type": "linear", "out": hidden}, {"type": "bn"}, {"type": "relu"},
            {"type": "linear", "out": output_shape[0]}, {"type": "bn"},
            {"type": "tanh"},
        ]
    elif len(output_shape) == 3:
        c, h, w = output_shape
        if h % 4 or w % 4:
            raise SpecError(f"image generator needs H and W divisible by 4, got {output_shape}")
        c0, c1 = hidden, hidden // 2
        layers = [{"type": "linear", "out": c0 * (h // 4) * (w // 4)},
                  {"type": "reshape", "shape": [c0, h // 4, w // 4]}, {"type": "bn"}]
        for width in (c0, c1):
            if upsample == "nearest":
                layers += [{"type": "upsample", "factor": 2},
                           {"type": "conv", "out": width, "kernel": 3, "padding": 1}]
            elif upsample == "deconv":
                layers += [{"type": "deconv", "out": width, "kernel": 4, "stride": 2,
                            "padding": 1}]
            else:
                raise SpecError(f"unknown upsampling mode {upsample!r}")
            layers += [{"type": "bn"}, {"type": "relu"}]
        layers += [{"type": "conv", "out": c, "kernel": 3, "padding": 1}, {"type": "bn"},
                   {"type": "tanh"}]
    else:
        raise SpecError(f"no generator template for output shape {output_shape}")
    return NetworkSpec(layers, (int(noise_dim),), "generator")


def build_generator(noise_dim: int, output_shape, seed: int = 0, hidden: int = 64,
                    upsample: str = "nearest") -> Network:
    return Network(generator_spec(noise_dim, output_shape, hidden, upsample), seed)


def param_fingerprint(net: Network) -> str:
    """SHA-256 over names, shapes and float64 bytes of all parameters and buffers."""
    h = hashlib.sha256()
    for name, arr in net.state_dict().items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        h.update(name.encode())
        h.update(np.asarray(arr.shape, dtype="<i8").tobytes())
        h.update(arr.tobytes())
    return h.hexdigest()
