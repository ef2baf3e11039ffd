"""Generator and patch-discriminator builders.

The generator is a U-Net: strided k=4 conv encoder mirrored by a
transposed-conv decoder with skip concatenations and a tanh output. Each
discriminator is a ladder of (n-1) strided k=4 convs plus a k=2 head conv
emitting one logit per patch; n controls the receptive field, which walks
the sequence 2, 6, 14, 30, 62, 126.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor

PATCH_SIZES = (2, 6, 14, 30, 62, 126)


def compute_receptive_field(layers: Sequence[tuple[int, int]]) -> int:
    """Receptive field of one output unit of a conv stack.

    ``layers`` is ordered input -> output as (kernel, stride) pairs; the
    recurrence r <- s*(r - 1) + k runs from the output layer backward.
    """
    if not layers:
        raise ValueError("layer list must be non-empty")
    r = 1
    for k, s in reversed(list(layers)):
        if k < 1 or s < 1:
            raise ValueError(f"kernel and stride must be positive, got ({k}, {s})")
        r = s * (r - 1) + k
    return r


# -- module plumbing ---------------------------------------------------------


class Module:
    """Minimal layer container: parameter / buffer discovery by attribute."""

    _buffers: tuple[str, ...] = ()

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: b for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        expected = set(own) | set(bufs)
        if expected != set(state):
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()
        for name, b in bufs.items():
            arr = np.asarray(state[name], dtype=b.dtype)
            if arr.shape != b.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {b.shape}")
            b[...] = arr

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, stride: int, pad: int,
                 rng: np.random.Generator):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.weight = Tensor(
            rng.normal(0.0, 0.02, size=(cout, cin, k, k)).astype(np.float32),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class ConvTranspose2d(Module):
    def __init__(self, cin: int, cout: int, k: int, stride: int, pad: int,
                 rng: np.random.Generator):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.weight = Tensor(
            rng.normal(0.0, 0.02, size=(cin, cout, k, k)).astype(np.float32),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv_transpose2d(x, self.weight, self.bias,
                                  stride=self.stride, pad=self.pad)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, eps=self.eps,
                            training=self.training,
                            running_mean=self.running_mean,
                            running_var=self.running_var,
                            momentum=self.momentum)


# -- generator ---------------------------------------------------------------

_RESOLUTIONS = (16, 32, 64, 128, 256)


def _channel_plan(base: int, depth: int, cap_mult: int = 8) -> list[int]:
    return [min(base * 2 ** i, cap_mult * base) for i in range(depth)]


class GeneratorNet(Module):
    """U-Net translator from a contour image to a structure image.

    Encoder stage: conv(k4 s2 p1) -> norm -> leaky_relu(0.2); no norm on the
    first stage or on the 1x1 bottleneck. Decoder stage: conv_transpose
    (k4 s2 p1) -> norm -> relu, consuming the mirrored encoder output via
    channel concatenation; final stage maps to 1 channel through tanh.
    """

    def __init__(self, resolution: int, rng: np.random.Generator,
                 in_channels: int = 1, base_channels: int = 32):
        super().__init__()
        if resolution not in _RESOLUTIONS:
            raise ConfigError(
                f"resolution must be one of {_RESOLUTIONS}, got {resolution}"
            )
        self.resolution = resolution
        depth = int(np.log2(resolution))
        ch = _channel_plan(base_channels, depth)

        self.enc_convs = []
        self.enc_norms = []
        prev = in_channels
        for i in range(depth):
            self.enc_convs.append(Conv2d(prev, ch[i], 4, 2, 1, rng))
            # first stage and the 1x1 bottleneck run without norm
            self.enc_norms.append(
                BatchNorm2d(ch[i]) if 0 < i < depth - 1 else None
            )
            prev = ch[i]

        self.dec_convs = []
        self.dec_norms = []
        prev = ch[depth - 1]
        for j in range(depth - 1):
            out = ch[depth - 2 - j]
            self.dec_convs.append(ConvTranspose2d(prev, out, 4, 2, 1, rng))
            self.dec_norms.append(BatchNorm2d(out))
            prev = out + ch[depth - 2 - j]  # skip concat doubles the input
        self.final = ConvTranspose2d(prev, 1, 4, 2, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        skips = []
        h = x
        for conv, norm in zip(self.enc_convs, self.enc_norms):
            h = conv(h)
            if norm is not None:
                h = norm(h)
            h = T.leaky_relu(h, 0.2)
            skips.append(h)
        for j, (conv, norm) in enumerate(zip(self.dec_convs, self.dec_norms)):
            h = T.relu(norm(conv(h)))
            h = T.concat([h, skips[len(skips) - 2 - j]], axis=1)
        return T.tanh(self.final(h))


def build_generator(resolution: int, seed: int = 0, in_channels: int = 1,
                    base_channels: int = 32) -> GeneratorNet:
    rng = np.random.default_rng(seed)
    return GeneratorNet(resolution, rng, in_channels=in_channels,
                        base_channels=base_channels)


# -- discriminators ----------------------------------------------------------


@dataclass(frozen=True)
class DiscriminatorSpec:
    """One patch discriminator: its receptive field and loss weight."""

    patch_size: int
    weight: float
    conditional: bool = True

    def __post_init__(self):
        if self.patch_size not in PATCH_SIZES:
            raise ConfigError(
                f"unsupported patch size {self.patch_size}; valid sizes are "
                f"{PATCH_SIZES}"
            )
        if not 0.0 < self.weight <= 1.0:
            raise ConfigError(f"weight must be in (0, 1], got {self.weight}")

    @property
    def num_layers(self) -> int:
        # patch = 2**(n+1) - 2  =>  n = log2(patch + 2) - 1
        return int(np.log2(self.patch_size + 2)) - 1


class DiscriminatorNet(Module):
    """Conv ladder emitting a 2D map of per-patch real/fake logits."""

    def __init__(self, spec: DiscriminatorSpec, in_channels: int,
                 resolution: int, rng: np.random.Generator,
                 base_channels: int = 32):
        super().__init__()
        self.spec = spec
        self.conditional = spec.conditional
        n = spec.num_layers
        # keep the map at least 1x1: at most log2(res) - 1 stride-2 convs
        max_down = max(int(np.log2(resolution)) - 1, 0)
        n_down = min(n - 1, max_down)

        self.convs = []
        self.norms = []
        prev = in_channels * (2 if spec.conditional else 1)
        ch = _channel_plan(base_channels, max(n_down, 1))
        for i in range(n_down):
            self.convs.append(Conv2d(prev, ch[i], 4, 2, 1, rng))
            self.norms.append(BatchNorm2d(ch[i]) if i > 0 else None)
            prev = ch[i]
        self.head = Conv2d(prev, 1, 2, 1, 0, rng)

        self.layer_shapes = [(4, 2)] * n_down + [(2, 1)]
        self.effective_patch_size = compute_receptive_field(self.layer_shapes)

    def forward(self, candidate: Tensor, condition: Optional[Tensor] = None) -> Tensor:
        if self.conditional:
            if condition is None:
                raise ValueError("conditional discriminator needs the contour image")
            h = T.concat([condition, candidate], axis=1)
        else:
            h = candidate
        for conv, norm in zip(self.convs, self.norms):
            h = conv(h)
            if norm is not None:
                h = norm(h)
            h = T.leaky_relu(h, 0.2)
        return self.head(h)


def build_discriminator(spec: DiscriminatorSpec, in_channels: int = 1,
                        resolution: int = 256, seed: int = 0,
                        base_channels: int = 32) -> DiscriminatorNet:
    rng = np.random.default_rng(seed)
    return DiscriminatorNet(spec, in_channels, resolution, rng,
                            base_channels=base_channels)
