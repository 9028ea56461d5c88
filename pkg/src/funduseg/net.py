"""Minimal from-scratch U-Net-style encoder-decoder.

Architecture per level: two same-padded 3x3 conv + ReLU, 2x2 max-pool down,
nearest 2x upsample followed by a 3x3 conv up (avoids checkerboard artifacts),
skip concatenation, channel doubling per level, 1x1 conv head with per-pixel
softmax. Reverse-mode gradients and Adam are implemented here directly; the
conv/pool/upsample kernels come from funduseg.kernels.

Batches are NHWC tensors (channel-last, matching the raster convention) and
kernels are HWIO. Parameters live in an ordered name -> array dict
("<layer>.w", "<layer>.b"); that declaration order is the checkpoint wire
order.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheMismatch, ConfigError, ShapeError
from .kernels import (
    conv2d_backward,
    conv2d_forward,
    maxpool2_backward,
    maxpool2_forward,
    upsample2_backward,
    upsample2_forward,
)
from .raster import EDGE_STACK_ROLES, REGION_ROLES, ChannelStack, Image2D

CHECKPOINT_MAGIC = b"FSEGNET1"

# softmax outputs are clamped away from {0,1} by the same epsilon the focal
# loss uses; without this the loss-side clamp meets a vanishing jacobian at
# saturation and gradients underflow, freezing training
PROB_EPS = 1e-7


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_filters: int = 16
    in_channels: int = 3
    out_channels: int = 5

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_filters < 1:
            raise ConfigError(f"base_filters must be >= 1, got {self.base_filters}")
        if self.out_channels not in (3, 5):
            raise ConfigError(f"out_channels must be 3 or 5, got {self.out_channels}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")

    def roles(self):
        return EDGE_STACK_ROLES if self.out_channels == 5 else REGION_ROLES


@dataclass(frozen=True)
class LayerSpec:
    name: str
    c_in: int
    c_out: int
    ksize: int


def layer_specs(cfg: UNetConfig):
    """Convolution layers in declaration (and checkpoint) order."""
    f = cfg.base_filters
    specs = []
    c_prev = cfg.in_channels
    for i in range(cfg.depth):
        c = f * 2 ** i
        specs.append(LayerSpec(f"enc{i}a", c_prev, c, 3))
        specs.append(LayerSpec(f"enc{i}b", c, c, 3))
        c_prev = c
    c_mid = f * 2 ** cfg.depth
    specs.append(LayerSpec("mida", c_prev, c_mid, 3))
    specs.append(LayerSpec("midb", c_mid, c_mid, 3))
    c_prev = c_mid
    for i in reversed(range(cfg.depth)):
        c = f * 2 ** i
        specs.append(LayerSpec(f"dec{i}u", c_prev, c, 3))
        specs.append(LayerSpec(f"dec{i}a", 2 * c, c, 3))
        specs.append(LayerSpec(f"dec{i}b", c, c, 3))
        c_prev = c
    specs.append(LayerSpec("head", c_prev, cfg.out_channels, 1))
    return specs


def he_normal(ksize: int, c_in: int, c_out: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean HWIO kernel draws with variance 2/fan_in."""
    fan_in = c_in * ksize * ksize
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(ksize, ksize, c_in, c_out))


def init_params(cfg: UNetConfig, seed: int, dtype=np.float32) -> dict:
    """He-initialized kernels, zero biases; each layer draws from its own
    seeded child stream so shared layers match across configs that only
    differ later in the stack."""
    params = {}
    for li, spec in enumerate(layer_specs(cfg)):
        rng = np.random.default_rng([int(seed), li])
        params[f"{spec.name}.w"] = he_normal(spec.ksize, spec.c_in, spec.c_out, rng).astype(dtype)
        params[f"{spec.name}.b"] = np.zeros(spec.c_out, dtype=dtype)
    return params


def params_dtype(params: dict):
    return next(iter(params.values())).dtype


def params_checksum(params: dict) -> str:
    h = hashlib.sha256()
    for name in params:
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype="<f4").tobytes())
    return h.hexdigest()


def _softmax_channels(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def forward(params: dict, cfg: UNetConfig, batch: np.ndarray):
    """Run the network on an NHWC batch. Returns (probs, cache).

    probs has per-pixel channel sums of 1; cache feeds backward().
    """
    x = np.asarray(batch)
    if x.ndim != 4:
        raise ShapeError(f"batch must be 4-D NHWC, got shape {x.shape}")
    n, h, w, c = x.shape
    if c != cfg.in_channels:
        raise ShapeError(f"batch has {c} channels, config expects {cfg.in_channels}")
    step = 2 ** cfg.depth
    if h % step or w % step:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by 2^depth={step}")
    x = np.ascontiguousarray(x, dtype=params_dtype(params))

    cache = {"cfg": cfg, "in_shape": x.shape}

    def conv_relu(name, t, relu=True):
        out = conv2d_forward(t, params[f"{name}.w"], params[f"{name}.b"])
        if relu:
            out = _relu(out)
        cache[f"{name}.in"] = t
        cache[f"{name}.out"] = out
        return out

    t = x
    skips = []
    for i in range(cfg.depth):
        t = conv_relu(f"enc{i}a", t)
        t = conv_relu(f"enc{i}b", t)
        skips.append(t)
        t, idx = maxpool2_forward(t)
        cache[f"pool{i}.idx"] = idx
    t = conv_relu("mida", t)
    t = conv_relu("midb", t)
    for i in reversed(range(cfg.depth)):
        t = upsample2_forward(t)
        t = conv_relu(f"dec{i}u", t)
        t = np.concatenate([t, skips[i]], axis=3)
        t = conv_relu(f"dec{i}a", t)
        t = conv_relu(f"dec{i}b", t)
    logits = conv_relu("head", t, relu=False)
    probs = _softmax_channels(logits)
    cache["probs"] = probs
    return probs, cache


def backward(params: dict, cfg: UNetConfig, cache: dict, dprobs: np.ndarray) -> dict:
    """Exact gradients of the scalar loss whose d(loss)/d(probs) is supplied."""
    if cache.get("cfg") != cfg:
        raise CacheMismatch("cache built for a different configuration")
    probs = cache.get("probs")
    if probs is None or probs.shape != np.asarray(dprobs).shape:
        raise CacheMismatch(
            f"upstream gradient shape {np.asarray(dprobs).shape} does not match cache"
        )
    dprobs = np.ascontiguousarray(dprobs, dtype=probs.dtype)
    grads = {}

    def conv_relu_back(name, dout, relu=True):
        if relu:
            dout = dout * (cache[f"{name}.out"] > 0)
        dx, dw, db = conv2d_backward(cache[f"{name}.in"], params[f"{name}.w"], dout)
        grads[f"{name}.w"] = dw
        grads[f"{name}.b"] = db
        return dx

    # softmax jacobian: dz_c = p_c * (g_c - sum_k g_k p_k)
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    dlogits = probs * (dprobs - inner)

    dt = conv_relu_back("head", dlogits, relu=False)
    dskips = {}
    f = cfg.base_filters
    for i in range(cfg.depth):  # decoder levels, innermost-last in forward
        dt = conv_relu_back(f"dec{i}b", dt)
        dt = conv_relu_back(f"dec{i}a", dt)
        c = f * 2 ** i
        dskips[i] = dt[:, :, :, c:]
        dt = conv_relu_back(f"dec{i}u", np.ascontiguousarray(dt[:, :, :, :c]))
        dt = upsample2_backward(dt)
    dt = conv_relu_back("midb", dt)
    dt = conv_relu_back("mida", dt)
    for i in reversed(range(cfg.depth)):
        dt = maxpool2_backward(dt, cache[f"pool{i}.idx"])
        dt = dt + dskips[i]  # skip tensor fed both the pool and the concat
        dt = conv_relu_back(f"enc{i}b", dt)
        dt = conv_relu_back(f"enc{i}a", dt)
    return grads


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            t=0,
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def clip_gradients(grads: dict, max_norm: float) -> dict:
    """Scale the whole gradient dict so its global L2 norm is at most max_norm.

    Focal loss concentrates enormous gradients on saturated-wrong pixels;
    without a norm cap those spikes drive several consecutive full-size Adam
    steps and can collapse the network (no batch norm here to absorb it).
    """
    if max_norm <= 0:
        return grads
    total = float(np.sqrt(sum((g.astype(np.float64) ** 2).sum() for g in grads.values())))
    if total <= max_norm:
        return grads
    scale = np.asarray(max_norm / total, dtype=params_dtype(grads))
    return {k: g * scale for k, g in grads.items()}


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update. Pure: returns (params', state')."""
    if set(grads) != set(params):
        raise ShapeError("gradient keys do not match parameter keys")
    t = state.t + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape} for {k}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_p, AdamState(t=t, m=new_m, v=new_v, beta1=state.beta1, beta2=state.beta2, eps=state.eps)


def predict(params: dict, cfg: UNetConfig, image: Image2D) -> ChannelStack:
    """Single-image forward pass as a ChannelStack of probability planes."""
    probs, _ = forward(params, cfg, image.data[None])
    return ChannelStack(cfg.roles(), np.clip(probs[0].astype(np.float64), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Checkpoints: magic, config as int32 LE, parameter planes as float32 LE in
# declaration order, plus a text manifest of layer names and shapes.
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: dict, cfg: UNetConfig) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<4i", cfg.depth, cfg.base_filters, cfg.in_channels, cfg.out_channels))
        for spec in layer_specs(cfg):
            for suffix in ("w", "b"):
                fh.write(np.ascontiguousarray(params[f"{spec.name}.{suffix}"], dtype="<f4").tobytes())
    lines = []
    for spec in layer_specs(cfg):
        for suffix in ("w", "b"):
            arr = params[f"{spec.name}.{suffix}"]
            lines.append(f"{spec.name}.{suffix} {'x'.join(map(str, arr.shape))}")
    path.with_suffix(path.suffix + ".manifest.txt").write_text("".join(l + "\n" for l in lines))


def load_checkpoint(path):
    """Returns (params, cfg); parameters come back as float32."""
    blob = Path(path).read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: bad checkpoint magic")
    depth, base, cin, cout = struct.unpack_from("<4i", blob, len(CHECKPOINT_MAGIC))
    cfg = UNetConfig(depth=depth, base_filters=base, in_channels=cin, out_channels=cout)
    off = len(CHECKPOINT_MAGIC) + 16
    params = {}
    for spec in layer_specs(cfg):
        wshape = (spec.ksize, spec.ksize, spec.c_in, spec.c_out)
        for suffix, shape in (("w", wshape), ("b", (spec.c_out,))):
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
            params[f"{spec.name}.{suffix}"] = arr.copy()
            off += 4 * count
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    return params, cfg
