"""Declarative architecture specs and model builders.

Three families: a mini residual backbone with configurable stem stride
("minires"), a pooling-token-mixer backbone with configurable
patch-embedding stride and optional self-attention stages ("poolformer"),
and a multi-region fusion model (face + two eye branches, concatenated
features, one linear head).

An ArchitectureSpec is an ordered list of LayerSpec records; models are
built by interpreting the list, and the receptive-field analyzer consumes
the flattened spatial trunk of the same list, so the two always agree.
"""

import math
from dataclasses import dataclass

from . import nn
from . import ops
from . import tensor as T


LAYER_KINDS = (
    "conv", "maxpool", "avgpool", "residual-block", "pool-mixer-block",
    "attention-mixer-block", "global-avg-pool", "linear", "relu", "batchnorm",
)

ALLOWED_STRIDES = (1, 2, 4)


class ArchitectureError(ValueError):
    """Invalid or inconsistent architecture specification."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_channels: int = 0
    out_channels: int = 0
    bias: bool = False
    hidden: int = 0  # mixer-block channel-MLP width

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "maxpool", "avgpool", "residual-block",
                         "pool-mixer-block", "attention-mixer-block"):
            if self.stride not in ALLOWED_STRIDES:
                raise ArchitectureError(
                    f"{self.kind}: stride must be one of {ALLOWED_STRIDES}, got {self.stride}")


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    layers: tuple
    input_resolution: int
    head_outputs: int = 2

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ArchitectureError("architecture needs at least one layer")
        validate_spec(self)

    @property
    def headless(self):
        return self.layers[-1].kind == "global-avg-pool"


@dataclass(frozen=True)
class MultiRegionSpec:
    face_backbone: ArchitectureSpec
    eye_backbone: ArchitectureSpec
    share_eye_weights: bool = False

    def __post_init__(self):
        for which, spec in (("face", self.face_backbone), ("eye", self.eye_backbone)):
            if not spec.headless:
                raise ArchitectureError(
                    f"multi-region {which} backbone must end in global average pooling "
                    "(feature vectors, not logits)")


def _spatial_out(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def spec_feature_dim(spec):
    """Channel width entering the global average pool."""
    channels = 0
    for layer in spec.layers:
        if layer.out_channels:
            channels = layer.out_channels
    return channels


def validate_spec(spec):
    """Check channel chaining and that spatial dims stay >= 1."""
    size = spec.input_resolution
    channels = None
    for i, layer in enumerate(spec.layers):
        where = f"{spec.name} layer {i} ({layer.kind})"
        if layer.kind in ("conv", "residual-block", "pool-mixer-block",
                          "attention-mixer-block", "batchnorm", "linear"):
            if channels is not None and layer.in_channels != channels:
                raise ArchitectureError(
                    f"{where}: in_channels {layer.in_channels} does not chain "
                    f"from previous out_channels {channels}")
            channels = layer.out_channels or channels
        if layer.kind == "conv":
            size = _spatial_out(size, layer.kernel, layer.stride, layer.padding)
        elif layer.kind in ("maxpool", "avgpool"):
            size = _spatial_out(size, layer.kernel, layer.stride, layer.padding)
        elif layer.kind == "residual-block":
            size = _spatial_out(size, 3, layer.stride, 1)
        elif layer.kind in ("pool-mixer-block", "attention-mixer-block"):
            pass  # size preserved
        elif layer.kind == "global-avg-pool":
            size = 1
        if size < 1:
            raise ArchitectureError(
                f"{where}: input resolution {spec.input_resolution} collapses "
                f"spatial dims below 1")
    return size


class ResidualBlock(nn.Module):
    """Two 3x3 convs with batchnorm, identity skip, 1x1 projection on change."""

    def __init__(self, in_channels, out_channels, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.proj = nn.Conv2d(in_channels, out_channels, 1, stride, 0, bias=False)
            self.proj_bn = nn.BatchNorm2d(out_channels)
        else:
            self.proj = None
            self.proj_bn = None

    def forward(self, x):
        out = T.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        skip = x if self.proj is None else self.proj_bn(self.proj(x))
        return T.relu(T.add(out, skip))


class ChannelMLP(nn.Module):
    """Per-token MLP as two 1x1 convolutions."""

    def __init__(self, channels, hidden):
        super().__init__()
        self.fc1 = nn.Conv2d(channels, hidden, 1, 1, 0, bias=True)
        self.fc2 = nn.Conv2d(hidden, channels, 1, 1, 0, bias=True)

    def forward(self, x):
        return self.fc2(T.relu(self.fc1(x)))


def pool_mix(x):
    """3x3 average-pool token mixing minus identity (zero-padded, divisor 9)."""
    return T.sub(ops.avgpool2d(ops.pad2d(x, 1), 3, 1), x)


def attention_mix(x):
    """Projection-free single-head self-attention over the token grid.

    Tokens are the spatial positions; queries, keys and values are all the
    raw token features, so mixing a grid of identical tokens returns it
    unchanged and the mixer adds no parameters.
    """
    n, c, h, w = x.dims
    tokens = T.transpose_last2(T.reshape(x, (n, c, h * w)))  # (N, T, C)
    scores = T.mul_scalar(T.matmul(tokens, T.transpose_last2(tokens)),
                          1.0 / math.sqrt(c))
    att = T.softmax_lastdim(scores)
    mixed = T.matmul(att, tokens)
    return T.reshape(T.transpose_last2(mixed), (n, c, h, w))


class MixerBlock(nn.Module):
    """Metaformer-style block: token mixer and channel MLP, both residual."""

    def __init__(self, channels, hidden, attention=False):
        super().__init__()
        self.norm1 = nn.BatchNorm2d(channels)
        self.norm2 = nn.BatchNorm2d(channels)
        self.mlp = ChannelMLP(channels, hidden)
        self.attention = attention

    def forward(self, x):
        mixer = attention_mix if self.attention else pool_mix
        x = T.add(x, mixer(self.norm1(x)))
        return T.add(x, self.mlp(self.norm2(x)))


def _build_layer(layer):
    if layer.kind == "conv":
        return nn.Conv2d(layer.in_channels, layer.out_channels, layer.kernel,
                         layer.stride, layer.padding, bias=layer.bias)
    if layer.kind == "maxpool":
        return nn.MaxPool2d(layer.kernel, layer.stride, layer.padding)
    if layer.kind == "avgpool":
        return nn.AvgPool2d(layer.kernel, layer.stride)
    if layer.kind == "residual-block":
        return ResidualBlock(layer.in_channels, layer.out_channels, layer.stride)
    if layer.kind == "pool-mixer-block":
        return MixerBlock(layer.out_channels, layer.hidden, attention=False)
    if layer.kind == "attention-mixer-block":
        return MixerBlock(layer.out_channels, layer.hidden, attention=True)
    if layer.kind == "global-avg-pool":
        return nn.GlobalAvgPool()
    if layer.kind == "linear":
        return nn.Linear(layer.in_channels, layer.out_channels, bias=True)
    if layer.kind == "relu":
        return nn.ReLU()
    if layer.kind == "batchnorm":
        return nn.BatchNorm2d(layer.out_channels)
    raise ArchitectureError(f"cannot build layer kind {layer.kind!r}")


class Model(nn.Module):
    """A built single-trunk network bound to its declarative spec."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.input_resolution = spec.input_resolution
        self.feature_dim = spec_feature_dim(spec)
        self.trunk = nn.Sequential([_build_layer(l) for l in spec.layers])

    def forward(self, x):
        return self.trunk(x)


class MultiRegionModel(nn.Module):
    """Face/left-eye/right-eye branches fused by one linear head.

    Branch features are concatenated in the fixed order (face, left, right).
    With shared eye weights the left and right branches are the same module
    object, i.e. the identical parameter storage.
    """

    def __init__(self, spec, face_net, left_net, right_net, head):
        super().__init__()
        self.spec = spec
        self.face = face_net
        self.left = left_net
        self.right = right_net
        self.head = head
        self.input_resolution = face_net.input_resolution
        self.eye_resolution = left_net.input_resolution

    def forward(self, face, left, right):
        feats = T.concat([self.face(face), self.left(left), self.right(right)], axis=1)
        return self.head(feats)


def build_model(spec, seed=0):
    model = Model(spec)
    nn.init_parameters(model, seed)
    return model


def minires_spec(first_stride=2, input_resolution=64, width=16,
                 blocks_per_stage=(1, 1), in_channels=1, head=True,
                 name=None):
    """Stem (k7 conv, configurable stride, then 3x2x1 maxpool) + residual stages."""
    if first_stride not in (1, 2):
        raise ArchitectureError(f"minires: first_stride must be 1 or 2, got {first_stride}")
    layers = [
        LayerSpec("conv", kernel=7, stride=first_stride, padding=3,
                  in_channels=in_channels, out_channels=width),
        LayerSpec("batchnorm", in_channels=width, out_channels=width),
        LayerSpec("relu"),
        LayerSpec("maxpool", kernel=3, stride=2, padding=1),
    ]
    channels = width
    for stage, nblocks in enumerate(blocks_per_stage):
        out = width * (2 ** stage)
        for b in range(nblocks):
            stride = 2 if (stage > 0 and b == 0) else 1
            layers.append(LayerSpec("residual-block", stride=stride,
                                    in_channels=channels, out_channels=out))
            channels = out
    layers.append(LayerSpec("global-avg-pool"))
    if head:
        layers.append(LayerSpec("linear", in_channels=channels, out_channels=2))
    name = name or f"minires-s{first_stride}-r{input_resolution}"
    return ArchitectureSpec(name, layers, input_resolution)


def build_minires(first_stride=2, input_resolution=64, width=16,
                  blocks_per_stage=(1, 1), in_channels=1, head=True, seed=0):
    if input_resolution not in (64, 128, 224, 256, 448):
        raise ArchitectureError(
            f"minires: input_resolution must be one of 64/128/224/256/448, "
            f"got {input_resolution}")
    return build_model(minires_spec(first_stride, input_resolution, width,
                                    blocks_per_stage, in_channels, head), seed)


def poolformer_spec(patch_stride=4, stages=4, attention_stages=(),
                    input_resolution=64, width=16, blocks_per_stage=2,
                    mlp_ratio=2, in_channels=1, head=True, name=None):
    """Patch embedding (k7 conv, configurable stride) + mixer stages.

    The patch-embedding kernel is fixed at 7 (padding 3) for every stride so
    changing the stride changes no weights; later stages downsample with
    k3 s2 p1 embeddings and double the width. ``attention_stages`` lists
    stage indices whose token mixers use self-attention instead of pooling.
    """
    if patch_stride not in (1, 2, 4):
        raise ArchitectureError(f"poolformer: patch_stride must be 1, 2 or 4, got {patch_stride}")
    attention_stages = tuple(sorted(set(int(s) for s in attention_stages)))
    for s in attention_stages:
        if not 0 <= s < stages:
            raise ArchitectureError(
                f"poolformer: attention stage index {s} out of range for {stages} stages")
    grid = _spatial_out(input_resolution, 7, patch_stride, 3)
    if grid < 2:
        raise ArchitectureError(
            f"poolformer: patch_stride {patch_stride} on resolution {input_resolution} "
            f"gives a {grid}x{grid} token grid; need at least 2x2")
    layers = []
    channels = in_channels
    for stage in range(stages):
        dim = width * (2 ** stage)
        if stage == 0:
            layers.append(LayerSpec("conv", kernel=7, stride=patch_stride, padding=3,
                                    in_channels=channels, out_channels=dim, bias=True))
        else:
            layers.append(LayerSpec("conv", kernel=3, stride=2, padding=1,
                                    in_channels=channels, out_channels=dim, bias=True))
            grid = _spatial_out(grid, 3, 2, 1)
        if grid < 2:
            raise ArchitectureError(
                f"poolformer: stage {stage} token grid {grid}x{grid} on resolution "
                f"{input_resolution}; need at least 2x2")
        kind = "attention-mixer-block" if stage in attention_stages else "pool-mixer-block"
        for _ in range(blocks_per_stage):
            layers.append(LayerSpec(kind, in_channels=dim, out_channels=dim,
                                    hidden=dim * mlp_ratio))
        channels = dim
    layers.append(LayerSpec("global-avg-pool"))
    if head:
        layers.append(LayerSpec("linear", in_channels=channels, out_channels=2))
    if name is None:
        att = "-attn" if attention_stages else ""
        name = f"poolformer-s{patch_stride}-r{input_resolution}{att}"
    return ArchitectureSpec(name, layers, input_resolution)


def build_poolformer(patch_stride=4, stages=4, attention_stages=(),
                     input_resolution=64, width=16, blocks_per_stage=2,
                     mlp_ratio=2, in_channels=1, head=True, seed=0):
    return build_model(poolformer_spec(patch_stride, stages, attention_stages,
                                       input_resolution, width, blocks_per_stage,
                                       mlp_ratio, in_channels, head), seed)


def build_multiregion(spec, seed=0):
    """Build the fusion model from headless face/eye backbone specs."""
    face_net = Model(spec.face_backbone)
    left_net = Model(spec.eye_backbone)
    right_net = left_net if spec.share_eye_weights else Model(spec.eye_backbone)
    feat = face_net.feature_dim + left_net.feature_dim + right_net.feature_dim
    head = nn.Linear(feat, spec.face_backbone.head_outputs, bias=True)
    model = MultiRegionModel(spec, face_net, left_net, right_net, head)
    nn.init_parameters(model, seed)
    return model


def parameter_count(model):
    """Number of trainable scalars; shared storage counted once."""
    return sum(p.data.size for p in model.parameters())


def _flatten_spatial(spec):
    """Spatial trunk as (kind, kernel, stride, padding) in forward order.

    Composite blocks are flattened to their main path; elementwise layers
    (relu, batchnorm) and the head are omitted. Attention mixers report the
    token-grid extent as their kernel; their receptive field is global, so
    the analytic profile refuses them.
    """
    entries = []
    size = spec.input_resolution
    for layer in spec.layers:
        if layer.kind == "conv":
            entries.append(("conv", layer.kernel, layer.stride, layer.padding))
            size = _spatial_out(size, layer.kernel, layer.stride, layer.padding)
        elif layer.kind in ("maxpool", "avgpool"):
            entries.append((layer.kind, layer.kernel, layer.stride, layer.padding))
            size = _spatial_out(size, layer.kernel, layer.stride, layer.padding)
        elif layer.kind == "residual-block":
            entries.append(("conv", 3, layer.stride, 1))
            entries.append(("conv", 3, 1, 1))
            size = _spatial_out(size, 3, layer.stride, 1)
        elif layer.kind == "pool-mixer-block":
            entries.extend([("avgpool", 3, 1, 1), ("conv", 1, 1, 0), ("conv", 1, 1, 0)])
        elif layer.kind == "attention-mixer-block":
            entries.extend([("attention", size, 1, (size - 1) // 2),
                            ("conv", 1, 1, 0), ("conv", 1, 1, 0)])
        # relu / batchnorm / global-avg-pool / linear contribute no spatial extent
    return entries


def list_layers(model):
    """Spatial layer records of the forward trunk.

    Single-trunk models return a flat list of (kind, kernel, stride, padding);
    multi-region models return [(branch_name, entries), ...] with the face
    branch first.
    """
    if isinstance(model, MultiRegionModel):
        face = _flatten_spatial(model.spec.face_backbone)
        eye = _flatten_spatial(model.spec.eye_backbone)
        return [("face", face), ("left", list(eye)), ("right", list(eye))]
    return _flatten_spatial(model.spec)


@dataclass
class ModelConfig:
    """Architecture selector plus its build parameters (config-file shaped)."""

    arch: str = "minires"
    resolution: int = 64
    in_channels: int = 1
    first_stride: int = 2
    width: int = 16
    blocks_per_stage: tuple = (1, 1)
    patch_stride: int = 4
    stages: int = 4
    attention_stages: tuple = ()
    poolformer_blocks: int = 2
    mlp_ratio: int = 2
    share_eye_weights: bool = False
    eye_resolution: int = 48
    eye_width: int = 16
    eye_blocks_per_stage: tuple = (1, 1)

    def to_lines(self):
        def fmt(v):
            if isinstance(v, tuple):
                return ",".join(str(x) for x in v)
            if isinstance(v, bool):
                return "true" if v else "false"
            return str(v)

        keys = ("arch", "resolution", "in_channels", "first_stride", "width",
                "blocks_per_stage", "patch_stride", "stages", "attention_stages",
                "poolformer_blocks", "mlp_ratio", "share_eye_weights",
                "eye_resolution", "eye_width", "eye_blocks_per_stage")
        return [f"{k} = {fmt(getattr(self, k))}" for k in keys]


def build_from_model_config(cfg, seed=0):
    if cfg.arch == "minires":
        return build_minires(cfg.first_stride, cfg.resolution, cfg.width,
                             cfg.blocks_per_stage, cfg.in_channels, head=True, seed=seed)
    if cfg.arch == "poolformer":
        return build_poolformer(cfg.patch_stride, cfg.stages, cfg.attention_stages,
                                cfg.resolution, cfg.width, cfg.poolformer_blocks,
                                cfg.mlp_ratio, cfg.in_channels, head=True, seed=seed)
    if cfg.arch == "multiregion":
        face = minires_spec(cfg.first_stride, cfg.resolution, cfg.width,
                            cfg.blocks_per_stage, cfg.in_channels, head=False)
        eye = minires_spec(cfg.first_stride, cfg.eye_resolution, cfg.eye_width,
                           cfg.eye_blocks_per_stage, cfg.in_channels, head=False,
                           name=f"minires-eye-s{cfg.first_stride}-r{cfg.eye_resolution}")
        return build_multiregion(MultiRegionSpec(face, eye, cfg.share_eye_weights), seed)
    raise ArchitectureError(f"unknown architecture {cfg.arch!r}")
