"""Model assembly, cost accounting and weight serialization.

The network is: frequency-collapsing conv -> stack of residual blocks of
separable dilated temporal convs -> bidirectional GRU -> shared-weight
self-attention (or average pooling) -> two fully connected layers with a
softmax output.  The footprint report counts parameters and multiplies
per layer under the conventions documented on :func:`footprint`.
"""

import json
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from stconv_kws import layers
from stconv_kws.numerics import ShapeMismatchError, softmax
from stconv_kws import frontend

WEIGHT_MAGIC = b"STCW"
WEIGHT_VERSION = 1


class ConfigError(ValueError):
    """Model configuration violates an invariant."""


class WeightFileError(Exception):
    """Weight file is malformed, truncated or of the wrong version."""


@dataclass
class ModelConfig:
    """Architecture hyperparameters the network is built from."""

    channels: int = 40
    num_blocks: int = 6
    bgru_hidden: int = 20
    attention: str = "swsa"          # "swsa" | "average"
    heads: int = 4
    fc_out: int = 20
    num_classes: int = 11
    query_index: int = 49
    num_frames: int = frontend.NUM_FRAMES
    num_mfcc: int = frontend.NUM_COEFFS

    def validate(self):
        if self.channels < 1 or self.num_blocks < 1 or self.bgru_hidden < 1:
            raise ConfigError("channels, num_blocks and bgru_hidden must be >= 1")
        if self.attention not in ("swsa", "average"):
            raise ConfigError(f"unknown attention kind {self.attention!r}")
        if self.attention == "swsa" and (2 * self.bgru_hidden) % self.heads != 0:
            raise ConfigError(
                f"heads={self.heads} must divide BGRU output width {2 * self.bgru_hidden}"
            )
        if not 0 <= self.query_index < self.num_frames:
            raise ConfigError(
                f"query_index {self.query_index} outside [0, {self.num_frames})"
            )


VARIANTS = ("base", "narrow", "avg")


def config_for_variant(variant: str) -> ModelConfig:
    """Named configurations: base, narrow (c=20, h=10) and average-pooling."""
    if variant == "base":
        return ModelConfig()
    if variant == "narrow":
        return ModelConfig(channels=20, bgru_hidden=10)
    if variant == "avg":
        return ModelConfig(attention="average")
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def dilation_schedule(num_blocks: int) -> list[int]:
    """Dilations of the 2*num_blocks temporal convs: d = 2^floor((i-1)/3).

    The layer index i counts conv layers through the whole CNN stack,
    with the frequency-collapsing conv as layer 1, so temporal convs
    occupy i = 2 .. 2*num_blocks + 1.
    """
    return [2 ** ((i - 1) // 3) for i in range(2, 2 * num_blocks + 2)]


class STConvModel:
    """The assembled network; see :func:`build` for initialization."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        c = config.channels
        sched = dilation_schedule(config.num_blocks)
        self.conv = layers.FreqCollapseConv(config.num_mfcc, c)
        self.blocks = [
            layers.Block(c, (sched[2 * b], sched[2 * b + 1]))
            for b in range(config.num_blocks)
        ]
        self.bgru = layers.BGRU(c, config.bgru_hidden)
        att_dim = 2 * config.bgru_hidden
        if config.attention == "swsa":
            self.attention = layers.SWSA(att_dim, config.heads, config.query_index)
        else:
            self.attention = layers.AvgPool()
        self.fc = layers.Dense(att_dim, config.fc_out)
        self.fc_relu = layers.ReLU()
        self.classifier = layers.Dense(config.fc_out, config.num_classes)

    def named_layers(self):
        """(name, layer) pairs in declaration order."""
        yield "conv", self.conv
        for i, block in enumerate(self.blocks):
            for child_name, child in block.children.items():
                yield f"block{i}.{child_name}", child
        yield "bgru.fwd", self.bgru.fwd
        yield "bgru.bwd", self.bgru.bwd
        if isinstance(self.attention, layers.SWSA):
            yield "attention", self.attention
        yield "fc", self.fc
        yield "classifier", self.classifier

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            f"{name}.{pname}": arr
            for name, layer in self.named_layers()
            for pname, arr in layer.params.items()
        }

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            f"{name}.{pname}": arr
            for name, layer in self.named_layers()
            for pname, arr in layer.grads.items()
        }

    def set_parameters(self, values: dict[str, np.ndarray]):
        for name, arr in self.parameters().items():
            arr[...] = values[name]

    def zero_grads(self):
        for _, layer in self.named_layers():
            layer.zero_grads()

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state (batch-norm running statistics)."""
        out = {}
        for name, layer in self.named_layers():
            if isinstance(layer, layers.BatchNorm):
                out[f"{name}.running_mean"] = layer.running_mean
                out[f"{name}.running_var"] = layer.running_var
        return out

    def forward_logits(self, features: np.ndarray, train: bool = False) -> np.ndarray:
        cfg = self.config
        x = np.asarray(features, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (cfg.num_frames, cfg.num_mfcc):
            raise ShapeMismatchError(
                f"expected features of shape (B, {cfg.num_frames}, {cfg.num_mfcc}), "
                f"got {np.asarray(features).shape}"
            )
        h = self.conv.forward(x, train)
        for block in self.blocks:
            h = block.forward(h, train)
        h = self.bgru.forward(h, train)
        h = self.attention.forward(h, train)
        h = self.fc_relu.forward(self.fc.forward(h, train), train)
        logits = self.classifier.forward(h, train)
        return logits[0] if squeeze else logits

    def forward(self, features: np.ndarray, train: bool = False) -> np.ndarray:
        """Posterior vector(s) over the output classes; rows sum to 1."""
        return softmax(self.forward_logits(features, train), axis=-1)

    def backward(self, dlogits: np.ndarray):
        """Backpropagate a gradient w.r.t. the logits through the network."""
        d = self.fc.backward(self.fc_relu.backward(self.classifier.backward(dlogits)))
        d = self.attention.backward(d)
        d = self.bgru.backward(d)
        for block in reversed(self.blocks):
            d = block.backward(d)
        return self.conv.backward(d)


def build(config: ModelConfig, seed: int) -> STConvModel:
    """Build a model with fan-in-scaled uniform weights from a fixed seed.

    Weight matrices draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
    start at zero, batch-norm at gamma=1/beta=0.  The same (config, seed)
    always yields bit-identical parameters.
    """
    model = STConvModel(config)
    rng = np.random.default_rng(seed)
    for name, arr in model.parameters().items():
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("bias", "beta") or leaf.startswith("b_"):
            continue
        if leaf == "gamma":
            continue
        if leaf == "depthwise":
            fan_in = arr.shape[0]  # 3 taps per channel
        elif leaf in ("w", "pointwise"):
            fan_in = arr.shape[0]  # stored (in, out)
        else:
            fan_in = arr.shape[-1] if arr.ndim > 1 else arr.shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        arr[...] = rng.uniform(-bound, bound, size=arr.shape)
    return model


@dataclass
class FootprintReport:
    """Per-layer parameter and multiply counts plus totals."""

    rows: list = field(default_factory=list)  # (name, params, mults)
    total_params: int = 0
    total_mults: int = 0

    def add(self, name, params, mults):
        self.rows.append((name, int(params), int(mults)))
        self.total_params += int(params)
        self.total_mults += int(mults)

    def as_text(self) -> str:
        width = max(len(r[0]) for r in self.rows) + 2
        lines = [f"{'Layer':<{width}}{'Par.':>12}{'Mult.':>14}"]
        for name, p, m in self.rows:
            lines.append(f"{name:<{width}}{p:>12,}{m:>14,}")
        lines.append(f"{'Total':<{width}}{self.total_params:>12,}{self.total_mults:>14,}")
        return "\n".join(lines)


def footprint(config: ModelConfig) -> FootprintReport:
    """Parameter and multiply counts per layer.

    Counting conventions: convolutions count kernel weights only (no
    biases) and one multiply per kernel weight per output element; the
    BGRU counts 3*(d_in*h + h^2 + h) parameters and per-timestep
    multiplies per direction (the bias add is counted as a multiply);
    SWSA counts the full-sequence projection, one extra query
    projection, the score dot products and the weighted sum; the
    fully connected layers count their weight matrix once.  Batch-norm
    scale/shift parameters are trainable but reported separately from
    this table.
    """
    config.validate()
    t, f, c, h = config.num_frames, config.num_mfcc, config.channels, config.bgru_hidden
    report = FootprintReport()
    report.add("Conv", f * c, t * c * f)
    per_conv_params = 3 * c + c * c
    per_conv_mults = t * c * 3 + t * c * c
    n_convs = 2 * config.num_blocks
    report.add(
        f"Block*{config.num_blocks}", n_convs * per_conv_params, n_convs * per_conv_mults
    )
    gru_terms = 3 * (c * h + h * h + h)
    report.add("BGRU", 2 * gru_terms, 2 * t * gru_terms)
    d = 2 * h
    if config.attention == "swsa":
        report.add("SWSA", d * d, t * d * d + d * d + t * d + t * d)
    else:
        report.add("AvgPool", 0, 0)
    report.add("FC", d * config.fc_out, d * config.fc_out)
    report.add("Softmax", config.fc_out * config.num_classes, config.fc_out * config.num_classes)
    return report


def receptive_field(config: ModelConfig) -> int:
    """Input frames seen by one output frame of the CNN stack.

    RF = 1 + sum over conv layers of (kernel_time - 1) * dilation; the
    frequency-collapsing conv has kernel_time 1 and contributes nothing.
    """
    config.validate()
    return 1 + sum(2 * d for d in dilation_schedule(config.num_blocks))


def save_weights(model: STConvModel, path) -> None:
    """Serialize config + parameters + batch-norm stats as 32-bit floats."""
    entries = list(model.parameters().items()) + list(model.buffers().items())
    manifest = []
    blobs = []
    offset = 0
    for name, arr in entries:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    config_json = json.dumps(asdict(model.config)).encode("utf-8")
    manifest_json = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(struct.pack("<III", WEIGHT_VERSION, 0, 0))
        fh.write(struct.pack("<I", len(config_json)))
        fh.write(config_json)
        fh.write(struct.pack("<I", len(manifest_json)))
        fh.write(manifest_json)
        for blob in blobs:
            fh.write(blob)


def load_weights(path, config: ModelConfig | None = None) -> STConvModel:
    """Load a weight file; optionally check it against an expected config."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != WEIGHT_MAGIC:
            raise WeightFileError(f"bad weight file magic in {path}")
        version = struct.unpack("<III", header[4:])[0]
        if version != WEIGHT_VERSION:
            raise WeightFileError(f"unsupported weight file version {version}")
        (config_len,) = struct.unpack("<I", fh.read(4))
        file_config = ModelConfig(**json.loads(fh.read(config_len).decode("utf-8")))
        (manifest_len,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(manifest_len).decode("utf-8"))
        payload = fh.read()
    if config is not None and asdict(config) != asdict(file_config):
        raise ShapeMismatchError(
            f"weight file config {asdict(file_config)} does not match "
            f"expected config {asdict(config)}"
        )
    model = STConvModel(file_config)
    targets = dict(model.parameters())
    targets.update(model.buffers())
    seen = set()
    for entry in manifest:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if name not in targets:
            raise WeightFileError(f"unexpected tensor {name!r} in weight file")
        arr = targets[name]
        if arr.shape != shape:
            raise ShapeMismatchError(
                f"tensor {name!r}: file shape {shape} vs model shape {arr.shape}"
            )
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise WeightFileError(f"truncated weight file: tensor {name!r}")
        arr[...] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
        seen.add(name)
    missing = set(targets) - seen
    if missing:
        raise WeightFileError(f"weight file missing tensors: {sorted(missing)}")
    return model
