"""Declarative backbones and the single/multistream topology transformer.

A ModelSpec is a flat list of LayerSpecs plus a topology tag. Multistream
variants duplicate the convolutional trunk (weight-disjoint twin streams),
concatenate flattened features, and share the dense head with its input
width doubled. The lattice variant additionally applies a cross-fusion
block after every conv-ReLU layer and after every residual block.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError, InputError
from .fusion import FusionOp, l_block, late_fuse

LAYER_KINDS = (
    "conv_relu",
    "maxpool",
    "avgpool",
    "residual_block",
    "flatten",
    "dense",
    "dense_relu",
    "dropout",
)

TOPOLOGIES = ("single", "multistream_late", "multistream_lattice")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int | None = None
    kernel: int | None = None
    stride: int = 1
    padding: int = 0
    window: int | None = None  # pooling; None on avgpool means global
    units: int | None = None
    drop_p: float | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")

    def to_dict(self):
        d = {"kind": self.kind}
        for f in ("filters", "kernel", "stride", "padding", "window", "units", "drop_p"):
            v = getattr(self, f)
            if v is not None and not (f == "stride" and v == 1) and not (f == "padding" and v == 0):
                d[f] = v
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def conv_relu(filters, kernel, stride=1, padding=0):
    return LayerSpec("conv_relu", filters=filters, kernel=kernel, stride=stride, padding=padding)


def maxpool(window, stride=None):
    return LayerSpec("maxpool", window=window, stride=window if stride is None else stride)


def avgpool(window=None, stride=None):
    return LayerSpec("avgpool", window=window, stride=stride if stride else (window or 1))


def residual_block(filters):
    return LayerSpec("residual_block", filters=filters, kernel=3, padding=1)


def flatten():
    return LayerSpec("flatten")


def dense(units):
    return LayerSpec("dense", units=units)


def dense_relu(units):
    return LayerSpec("dense_relu", units=units)


def dropout(p):
    return LayerSpec("dropout", drop_p=p)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple
    num_classes: int
    in_shape: tuple  # (C, H, W)
    topology: str = "single"
    fusion_op: FusionOp | None = None

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigurationError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "in_shape", tuple(self.in_shape))

    # -- serialization (stable key order via sort_keys)

    def to_dict(self):
        return {
            "name": self.name,
            "layers": [l.to_dict() for l in self.layers],
            "num_classes": self.num_classes,
            "in_shape": list(self.in_shape),
            "topology": self.topology,
            "fusion_op": self.fusion_op.to_dict() if self.fusion_op else None,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"],
            layers=tuple(LayerSpec.from_dict(l) for l in d["layers"]),
            num_classes=d["num_classes"],
            in_shape=tuple(d["in_shape"]),
            topology=d.get("topology", "single"),
            fusion_op=FusionOp.from_dict(d["fusion_op"]) if d.get("fusion_op") else None,
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# shape propagation


def _pool_out(extent, window, stride, what):
    if window > extent:
        raise ConfigurationError(f"{what}: pool window {window} exceeds extent {extent}")
    if (extent - window) % stride != 0:
        raise ConfigurationError(
            f"{what}: pool window {window}/stride {stride} does not tile extent {extent}"
        )
    return (extent - window) // stride + 1


def propagate_shapes(spec):
    """Symbolic per-layer output shapes from the declared input shape.

    Returns a list with one entry per layer: (C,H,W) tuples through the conv
    trunk, then integer feature widths after flatten. Batch extent is
    implicit and irrelevant to the result.
    """
    shape = spec.in_shape
    flat = None
    out = []
    for layer in spec.layers:
        if layer.kind == "conv_relu":
            c, h, w = shape
            ho = T._conv_out_extent(h, layer.padding, layer.kernel, layer.stride, spec.name)
            wo = T._conv_out_extent(w, layer.padding, layer.kernel, layer.stride, spec.name)
            shape = (layer.filters, ho, wo)
        elif layer.kind == "residual_block":
            c, h, w = shape
            if c != layer.filters:
                raise ConfigurationError(
                    f"{spec.name}: residual block expects {layer.filters} input channels, got {c}"
                )
            shape = (c, h, w)
        elif layer.kind in ("maxpool", "avgpool"):
            c, h, w = shape
            window = layer.window
            stride = layer.stride
            if window is None:  # global average pool
                window, stride = h, h
            shape = (
                c,
                _pool_out(h, window, stride, spec.name),
                _pool_out(w, window, stride, spec.name),
            )
        elif layer.kind == "flatten":
            flat = int(np.prod(shape))
        elif layer.kind in ("dense", "dense_relu"):
            if flat is None:
                raise ConfigurationError(f"{spec.name}: dense layer before flatten")
            flat = layer.units
        elif layer.kind == "dropout":
            pass
        out.append(shape if flat is None else flat)
    if not isinstance(out[-1], int) or out[-1] != spec.num_classes:
        raise ConfigurationError(
            f"{spec.name}: final layer width {out[-1]} != num_classes {spec.num_classes}"
        )
    return out


def _trunk_head_split(spec):
    """Index of the flatten layer separating conv trunk from dense head."""
    for i, layer in enumerate(spec.layers):
        if layer.kind == "flatten":
            return i
    raise ConfigurationError(f"{spec.name}: no flatten layer")


def _single_trunk_params(spec):
    """Trainable scalars in one copy of the conv trunk, plus the feature width."""
    split = _trunk_head_split(spec)
    shape = spec.in_shape
    trunk = 0
    for layer in spec.layers[:split]:
        c = shape[0]
        if layer.kind == "conv_relu":
            trunk += layer.filters * (c * layer.kernel * layer.kernel + 1)
            h = T._conv_out_extent(shape[1], layer.padding, layer.kernel, layer.stride, spec.name)
            w = T._conv_out_extent(shape[2], layer.padding, layer.kernel, layer.stride, spec.name)
            shape = (layer.filters, h, w)
        elif layer.kind == "residual_block":
            trunk += 2 * layer.filters * (layer.filters * 9 + 1)
        elif layer.kind in ("maxpool", "avgpool"):
            window = layer.window
            stride = layer.stride
            if window is None:
                window, stride = shape[1], shape[1]
            shape = (
                c,
                _pool_out(shape[1], window, stride, spec.name),
                _pool_out(shape[2], window, stride, spec.name),
            )
    return trunk, int(np.prod(shape))


def count_trunk_params(spec):
    """Trainable scalars in the convolutional trunk(s), excluding the head."""
    propagate_shapes(spec)  # validates
    trunk, _ = _single_trunk_params(spec)
    return trunk * (2 if spec.topology != "single" else 1)


def count_params(spec):
    """Exact trainable scalar count (weights + biases) for the spec."""
    propagate_shapes(spec)  # validates
    split = _trunk_head_split(spec)
    multistream = spec.topology != "single"
    trunk, feat = _single_trunk_params(spec)

    head = 0
    width = feat * (2 if multistream else 1)
    for layer in spec.layers[split + 1 :]:
        if layer.kind in ("dense", "dense_relu"):
            head += width * layer.units + layer.units
            width = layer.units
    return trunk * (2 if multistream else 1) + head


def fusible_layer_count(spec):
    return sum(1 for l in spec.layers if l.kind in ("conv_relu", "residual_block"))


def to_multistream(base, topology, fusion_op):
    """Derive the two-stream variant of a single-stream spec."""
    if base.topology != "single":
        raise ConfigurationError(f"{base.name} is already {base.topology}")
    if topology not in ("multistream_late", "multistream_lattice"):
        raise ConfigurationError(f"not a multistream topology: {topology!r}")
    if topology == "multistream_lattice" and fusible_layer_count(base) == 0:
        raise ConfigurationError(f"{base.name} has no conv-ReLU layers to fuse")
    suffix = "lattice" if topology == "multistream_lattice" else "late"
    return dataclasses.replace(
        base, name=f"{base.name}-{suffix}", topology=topology, fusion_op=fusion_op
    )


# ---------------------------------------------------------------------------
# backbone builders (32x32-native analogues of the classic layouts)


def _sc(width_scale, n):
    return max(1, math.ceil(width_scale * n))


def build_mini_alexnet(num_classes, width_scale=1.0, in_shape=(3, 32, 32)):
    """Five conv-ReLU layers (three pooled) and a three-layer dense head."""
    if width_scale <= 0:
        raise ConfigurationError(f"width_scale must be positive, got {width_scale}")
    s = lambda n: _sc(width_scale, n)
    layers = (
        conv_relu(s(96), 11, 1, 5),
        maxpool(2),
        conv_relu(s(256), 5, 1, 2),
        maxpool(2),
        conv_relu(s(384), 3, 1, 1),
        conv_relu(s(384), 3, 1, 1),
        conv_relu(s(256), 3, 1, 1),
        maxpool(2),
        flatten(),
        dense_relu(s(4096)),
        dropout(0.5),
        dense_relu(s(4096)),
        dropout(0.5),
        dense(num_classes),
    )
    return ModelSpec(f"mini-alexnet-w{width_scale:g}", layers, num_classes, in_shape)


_VGG_BLOCKS = {16: (2, 2, 3, 3, 3), 19: (2, 2, 4, 4, 4)}
_VGG_WIDTHS = (64, 128, 256, 512, 512)


def build_mini_vgg(depth_variant, num_classes, width_scale=1.0, in_shape=(3, 32, 32)):
    if depth_variant not in _VGG_BLOCKS:
        raise ConfigurationError(f"VGG depth must be 16 or 19, got {depth_variant}")
    s = lambda n: _sc(width_scale, n)
    layers = []
    for width, reps in zip(_VGG_WIDTHS, _VGG_BLOCKS[depth_variant]):
        layers += [conv_relu(s(width), 3, 1, 1) for _ in range(reps)]
        layers.append(maxpool(2))
    layers += [
        flatten(),
        dense_relu(s(4096)),
        dropout(0.5),
        dense_relu(s(4096)),
        dropout(0.5),
        dense(num_classes),
    ]
    return ModelSpec(
        f"mini-vgg{depth_variant}-w{width_scale:g}", tuple(layers), num_classes, in_shape
    )


_RESNET_BLOCKS = {18: (2, 2, 2, 2), 34: (3, 4, 6, 3)}
_RESNET_WIDTHS = (64, 128, 256, 512)


def build_mini_resnet(depth_variant, num_classes, width_scale=1.0, in_shape=(3, 32, 32)):
    """Stem conv plus four residual stages with strided 1x1 transitions."""
    if depth_variant not in _RESNET_BLOCKS:
        raise ConfigurationError(f"ResNet depth must be 18 or 34, got {depth_variant}")
    s = lambda n: _sc(width_scale, n)
    layers = [conv_relu(s(64), 3, 1, 1)]
    for i, (width, reps) in enumerate(zip(_RESNET_WIDTHS, _RESNET_BLOCKS[depth_variant])):
        if i > 0:
            # Strided projection between stages. Kernel 2 (not 1): with exact
            # output extents, (H-1)/2 is never an integer for even H.
            layers.append(conv_relu(s(width), 2, 2, 0))
        layers += [residual_block(s(width)) for _ in range(reps)]
    layers += [avgpool(None), flatten(), dense(num_classes)]
    return ModelSpec(
        f"mini-resnet{depth_variant}-w{width_scale:g}", tuple(layers), num_classes, in_shape
    )


BUILDERS = {
    "mini-alexnet": lambda classes, ws, in_shape: build_mini_alexnet(classes, ws, in_shape),
    "mini-vgg16": lambda classes, ws, in_shape: build_mini_vgg(16, classes, ws, in_shape),
    "mini-vgg19": lambda classes, ws, in_shape: build_mini_vgg(19, classes, ws, in_shape),
    "mini-resnet18": lambda classes, ws, in_shape: build_mini_resnet(18, classes, ws, in_shape),
    "mini-resnet34": lambda classes, ws, in_shape: build_mini_resnet(34, classes, ws, in_shape),
}


def build_backbone(name, num_classes, width_scale=1.0, in_shape=(3, 32, 32)):
    if name not in BUILDERS:
        raise ConfigurationError(f"unknown backbone {name!r}; known: {sorted(BUILDERS)}")
    return BUILDERS[name](num_classes, width_scale, in_shape)


# ---------------------------------------------------------------------------
# instantiation and forward evaluation


class ModelInstance:
    """A ModelSpec bound to seeded parameters.

    Parameter names are stable across runs: stream prefix ("s0"/"s1" for the
    twin trunks, "head" for the shared dense stack), layer index, role.
    ``init_scale`` multiplies the uniform fan-in init, used to provoke
    signal over-amplification deliberately in experiments.
    """

    def __init__(self, spec, seed=0, init_scale=1.0):
        self.spec = spec
        self.rng_seed = seed
        ss = np.random.SeedSequence([int(seed), 0x1A77]).spawn(2)
        init_rng = np.random.default_rng(ss[0])
        self._dropout_rng = np.random.default_rng(ss[1])
        self.params = {}
        self._split = _trunk_head_split(spec)
        self._shapes = propagate_shapes(spec)

        streams = ("s0", "s1") if spec.topology != "single" else ("s0",)
        for stream in streams:
            shape = spec.in_shape
            for i, layer in enumerate(spec.layers[: self._split]):
                c = shape[0]
                if layer.kind == "conv_relu":
                    self._add_conv(
                        init_rng, f"{stream}.layer{i:02d}", layer.filters, c, layer.kernel, init_scale
                    )
                    shape = self._shapes[i]
                elif layer.kind == "residual_block":
                    self._add_conv(
                        init_rng, f"{stream}.layer{i:02d}.a", layer.filters, c, 3, init_scale
                    )
                    self._add_conv(
                        init_rng, f"{stream}.layer{i:02d}.b", layer.filters, layer.filters, 3, init_scale
                    )
                else:
                    shape = self._shapes[i] if not isinstance(self._shapes[i], int) else shape
        feat = int(np.prod(self._shapes[self._split - 1])) if self._split else int(
            np.prod(spec.in_shape)
        )
        width = feat * len(streams)
        for i, layer in enumerate(spec.layers[self._split + 1 :], start=self._split + 1):
            if layer.kind in ("dense", "dense_relu"):
                lim = math.sqrt(6.0 / width) * init_scale
                self.params[f"head.layer{i:02d}.weight"] = T.Tensor(
                    init_rng.uniform(-lim, lim, size=(width, layer.units)), requires_grad=True
                )
                self.params[f"head.layer{i:02d}.bias"] = T.Tensor(
                    np.zeros(layer.units), requires_grad=True
                )
                width = layer.units

    def _add_conv(self, rng, name, filters, in_channels, kernel, init_scale):
        fan_in = in_channels * kernel * kernel
        # He-style uniform bound: keeps activation variance flat through
        # ReLU stacks; a plain 1/sqrt(fan_in) bound vanishes at this depth.
        lim = math.sqrt(6.0 / fan_in) * init_scale
        self.params[f"{name}.weight"] = T.Tensor(
            rng.uniform(-lim, lim, size=(filters, in_channels, kernel, kernel)),
            requires_grad=True,
        )
        self.params[f"{name}.bias"] = T.Tensor(np.zeros(filters), requires_grad=True)

    # -- forward

    def _trunk_layer(self, stream, i, layer, act):
        p = self.params
        if layer.kind == "conv_relu":
            out = T.conv2d(
                act,
                p[f"{stream}.layer{i:02d}.weight"],
                p[f"{stream}.layer{i:02d}.bias"],
                layer.stride,
                layer.padding,
            )
            return T.relu(out)
        if layer.kind == "residual_block":
            branch = T.relu(
                T.conv2d(
                    act, p[f"{stream}.layer{i:02d}.a.weight"], p[f"{stream}.layer{i:02d}.a.bias"], 1, 1
                )
            )
            branch = T.conv2d(
                branch, p[f"{stream}.layer{i:02d}.b.weight"], p[f"{stream}.layer{i:02d}.b.bias"], 1, 1
            )
            return T.relu(T.add(branch, act))
        if layer.kind == "maxpool":
            return T.maxpool2d(act, layer.window, layer.stride)
        if layer.kind == "avgpool":
            window = layer.window if layer.window is not None else act.shape[2]
            stride = layer.stride if layer.window is not None else window
            return T.avgpool2d(act, window, stride)
        raise ConfigurationError(f"unexpected trunk layer {layer.kind}")

    def forward(self, inputs, training=False):
        """Logits [N, num_classes] from one (single) or two (multistream) inputs."""
        if isinstance(inputs, T.Tensor):
            inputs = [inputs]
        multistream = self.spec.topology != "single"
        expected = 2 if multistream else 1
        if len(inputs) != expected:
            raise InputError(
                f"{self.spec.topology} model expects {expected} input stream(s), got {len(inputs)}"
            )
        for x in inputs:
            if x.data.ndim != 4 or x.data.shape[1:] != self.spec.in_shape:
                raise InputError(
                    f"input shape {x.data.shape[1:]} != spec in_shape {self.spec.in_shape}"
                )
        lattice = self.spec.topology == "multistream_lattice"
        streams = ("s0", "s1") if multistream else ("s0",)
        acts = list(inputs)
        for i, layer in enumerate(self.spec.layers[: self._split]):
            acts = [self._trunk_layer(s, i, layer, a) for s, a in zip(streams, acts)]
            if lattice and layer.kind in ("conv_relu", "residual_block"):
                acts = list(l_block(acts[0], acts[1], self.spec.fusion_op))
        feats = [T.flatten_batch(a) for a in acts]
        x = late_fuse(feats)
        for i, layer in enumerate(self.spec.layers[self._split + 1 :], start=self._split + 1):
            if layer.kind in ("dense", "dense_relu"):
                x = T.dense(
                    x, self.params[f"head.layer{i:02d}.weight"], self.params[f"head.layer{i:02d}.bias"]
                )
                if layer.kind == "dense_relu":
                    x = T.relu(x)
            elif layer.kind == "dropout":
                if training:
                    mask = (self._dropout_rng.random(x.shape) >= layer.drop_p).astype(np.float64)
                    x = T.scale(x, mask)
                else:
                    x = T.scale(x, 1.0 - layer.drop_p)
            else:
                raise ConfigurationError(f"unexpected head layer {layer.kind}")
        return x


def forward(model, inputs, training=False):
    return model.forward(inputs, training=training)
