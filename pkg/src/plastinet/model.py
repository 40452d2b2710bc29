"""Hybrid convolutional backbone with a compact sigmoid head.

The backbone is a stack of conv -> relu blocks, split into a low-level and a
high-level group, followed by global average pooling to a feature vector
``z`` of size ``d``.  The head is a single logistic unit ``sigmoid(w.z + b)``
with ``d + 1`` parameters.  Each of the three groups can be frozen
independently; frozen groups receive no gradient.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from . import tensorcore as tc
from .rng import stream
from .tensorcore import DimensionError, GradPair

CKPT_MAGIC = b"PCKP"
CKPT_VERSION = 1


class Level(str, enum.Enum):
    LOW = "LowLevel"
    HIGH = "HighLevel"
    HEAD = "Head"


class ModelStateError(RuntimeError):
    pass


@dataclass
class ParameterGroup:
    name: str
    level: Level
    params: list[GradPair]
    frozen: bool = False

    @property
    def size(self) -> int:
        return sum(p.size for p in self.params)


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    height: int = 32
    width: int = 32
    channels: tuple[int, ...] = (8, 16, 32, 32)
    strides: tuple[int, ...] = (2, 2, 2, 1)
    kernel: int = 3
    pad: int = 1
    n_high: int | None = None  # None -> top half of the blocks

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if len(self.channels) != len(self.strides) or not self.channels:
            raise ValueError("channels and strides must be non-empty and of equal length")
        if not 1 <= self.high_blocks <= len(self.channels):
            raise ValueError(f"n_high must be in [1, {len(self.channels)}], got {self.n_high}")

    @property
    def high_blocks(self) -> int:
        return len(self.channels) // 2 if self.n_high is None else int(self.n_high)

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["strides"] = list(self.strides)
        return d


def parameter_checksum(group: ParameterGroup) -> int:
    """64-bit order-sensitive digest of the raw parameter bits of ``group``."""
    h = hashlib.blake2b(digest_size=8)
    for p in group.params:
        h.update(p.name.encode())
        h.update(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        h.update(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    return int.from_bytes(h.digest(), "little")


@dataclass
class _Cache:
    inputs: list = field(default_factory=list)  # block inputs
    pre: list = field(default_factory=list)  # pre-activations
    cols: list = field(default_factory=list)
    post_shape: tuple = ()
    z: np.ndarray | None = None
    probs: np.ndarray | None = None


class HybridModel:
    def __init__(self, config: ModelConfig | None = None, seed: int = 0, rng: np.random.Generator | None = None):
        self.config = config or ModelConfig()
        rng = rng if rng is not None else stream(seed, "init")
        cfg = self.config
        self.conv_w: list[GradPair] = []
        self.conv_b: list[GradPair] = []
        c_in = cfg.in_channels
        h, w = cfg.height, cfg.width
        for i, (c_out, s) in enumerate(zip(cfg.channels, cfg.strides)):
            fan_in = c_in * cfg.kernel * cfg.kernel
            weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, cfg.kernel, cfg.kernel))
            self.conv_w.append(GradPair(f"conv{i}.w", weight))
            self.conv_b.append(GradPair(f"conv{i}.b", np.zeros(c_out)))
            h = tc.conv_output_extent(h, cfg.kernel, s, cfg.pad)
            w = tc.conv_output_extent(w, cfg.kernel, s, cfg.pad)
            c_in = c_out
        d = cfg.feature_dim
        self.head_w = GradPair("head.w", rng.normal(0.0, np.sqrt(2.0 / d), size=d))
        self.head_b = GradPair("head.b", np.zeros(1))
        n_low = len(cfg.channels) - cfg.high_blocks
        low = [p for i in range(n_low) for p in (self.conv_w[i], self.conv_b[i])]
        high = [p for i in range(n_low, len(cfg.channels)) for p in (self.conv_w[i], self.conv_b[i])]
        self.groups = [
            ParameterGroup("low", Level.LOW, low),
            ParameterGroup("high", Level.HIGH, high),
            ParameterGroup("head", Level.HEAD, [self.head_w, self.head_b]),
        ]
        self.n_low = n_low
        self._cache: _Cache | None = None

    # --- group helpers -------------------------------------------------------

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def group(self, key) -> ParameterGroup:
        for g in self.groups:
            if g.name == key or g.level == key:
                return g
        raise KeyError(key)

    def parameters(self) -> list[GradPair]:
        return [p for g in self.groups for p in g.params]

    def trainable_parameters(self) -> list[GradPair]:
        return [p for g in self.groups if not g.frozen for p in g.params]

    def set_frozen(self, **frozen: bool) -> None:
        for name, flag in frozen.items():
            self.group(name).frozen = bool(flag)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def checksums(self) -> dict[str, int]:
        return {g.name: parameter_checksum(g) for g in self.groups}

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            v = np.asarray(state[p.name], dtype=np.float64)
            if v.shape != p.value.shape:
                raise DimensionError(f"{p.name}: checkpoint shape {v.shape} != model shape {p.value.shape}")
            p.value[...] = v

    # --- forward / backward -------------------------------------------------

    def _check_input(self, batch: np.ndarray) -> np.ndarray:
        cfg = self.config
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 3:
            batch = batch[None]
        expected = (cfg.in_channels, cfg.height, cfg.width)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise DimensionError(f"input geometry {batch.shape[1:]} does not match model geometry {expected}")
        return batch

    def features(self, batch: np.ndarray) -> np.ndarray:
        """Backbone pass; returns z (N×d) and caches activations for backward."""
        x = self._check_input(batch)
        cache = _Cache()
        cfg = self.config
        for wp, bp, s in zip(self.conv_w, self.conv_b, cfg.strides):
            cache.inputs.append(x)
            out, cols = _conv(x, wp.value, s, cfg.pad)
            out += bp.value[None, :, None, None]
            cache.pre.append(out)
            cache.cols.append(cols)
            x = tc.relu(out)
        cache.post_shape = x.shape
        cache.z = tc.global_avg_pool(x)
        self._cache = cache
        return cache.z

    def forward(self, batch: np.ndarray) -> np.ndarray:
        z = self.features(batch)
        logits = z @ self.head_w.value + self.head_b.value[0]
        probs = tc.sigmoid(logits)
        self._cache.probs = probs
        return probs

    def logits(self, batch: np.ndarray) -> np.ndarray:
        z = self.features(batch)
        return z @ self.head_w.value + self.head_b.value[0]

    def backward(self, dL_dprobs: np.ndarray) -> None:
        if self._cache is None or self._cache.probs is None:
            raise ModelStateError("backward called before forward")
        dlogit = tc.sigmoid_backward(self._cache.probs, np.asarray(dL_dprobs, dtype=np.float64))
        self.backward_logits(dlogit)

    def backward_logits(self, dL_dlogit: np.ndarray) -> None:
        """Backpropagate a gradient w.r.t. the pre-sigmoid logits."""
        if self._cache is None or self._cache.z is None:
            raise ModelStateError("backward called before forward")
        g = np.asarray(dL_dlogit, dtype=np.float64)
        head = self.group("head")
        if not head.frozen:
            self.head_w.grad += self._cache.z.T @ g
            self.head_b.grad[0] += g.sum()
        if self._backbone_trainable():
            self.backward_features(np.outer(g, self.head_w.value))

    def _backbone_trainable(self) -> bool:
        return not (self.group("low").frozen and self.group("high").frozen)

    def backward_features(self, dz: np.ndarray) -> None:
        """Backpropagate a gradient w.r.t. z (N×d) into non-frozen conv blocks."""
        cache = self._cache
        if cache is None or cache.z is None:
            raise ModelStateError("backward called before forward")
        cfg = self.config
        low_frozen = self.group("low").frozen
        high_frozen = self.group("high").frozen
        n_blocks = len(self.conv_w)
        # deepest block that still needs a gradient
        lowest = 0 if not low_frozen else (self.n_low if not high_frozen else n_blocks)
        g = tc.global_avg_pool_backward(cache.post_shape, dz)
        for i in range(n_blocks - 1, lowest - 1, -1):
            g = tc.relu_backward(cache.pre[i], g)
            trainable = not (low_frozen if i < self.n_low else high_frozen)
            need_dx = i > lowest
            if trainable:
                self.conv_b[i].grad += g.sum(axis=(0, 2, 3))
            if trainable or need_dx:
                gx, gw = _conv_backward(cache.inputs[i], self.conv_w[i].value, g, cfg.strides[i], cfg.pad,
                                        need_dx, cache.cols[i])
                if trainable:
                    self.conv_w[i].grad += gw
                g = gx

    # --- checkpoints ----------------------------------------------------------

    def save(self, path, config_digest: str = "") -> None:
        header = {
            "version": CKPT_VERSION,
            "config_digest": config_digest,
            "model": self.config.to_dict(),
            "groups": [
                {"name": g.name, "level": g.level.value, "frozen": g.frozen, "params": [p.name for p in g.params]}
                for g in self.groups
            ],
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
            fh.write(blob)
            for g in self.groups:
                for p in g.params:
                    tc.write_tensor(fh, p.value)

    @classmethod
    def load(cls, path) -> "HybridModel":
        header, tensors = read_checkpoint(path)
        model = cls(ModelConfig(**header["model"]))
        model.load_state(tensors)
        for g in header["groups"]:
            model.group(g["name"]).frozen = g["frozen"]
        model.config_digest = header.get("config_digest", "")
        return model


def read_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, n = struct.unpack("<II", fh.read(8))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(n))
        tensors = {}
        for g in header["groups"]:
            for name in g["params"]:
                tensors[name] = tc.read_tensor(fh)
    return header, tensors



def _conv(x, w, stride, pad):
    return kernels.conv2d_forward(x, w, stride, pad)


def _conv_backward(x, w, g, stride, pad, need_dx, cols):
    return kernels.conv2d_backward(x, w, g, stride, pad, need_dx, cols)
