"""Core raster types and dataset-ingestion primitives.

Conventions fixed here and relied on everywhere else:
  * row-major layout, origin at top-left, channel-last for stacks
  * intensities are floats in [0,1]; files store them as 8-bit, 0-255,
    mapped linearly in both directions
  * class ids: 0 background, 1 optic disc, 2 optic cup

All types are immutable after construction (backing arrays are frozen),
so they are safe to share across parallel workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeMismatch, UnmappedValue

BACKGROUND, DISC, CUP = 0, 1, 2
VALID_CLASS_IDS = (BACKGROUND, DISC, CUP)


class ChannelRole(str, Enum):
    """Meaning of one plane of a ChannelStack."""

    BACKGROUND = "background"
    DISC_REGION = "disc_region"
    CUP_REGION = "cup_region"
    DISC_EDGE = "disc_edge"
    CUP_EDGE = "cup_edge"


REGION_ROLES = (ChannelRole.BACKGROUND, ChannelRole.DISC_REGION, ChannelRole.CUP_REGION)
EDGE_STACK_ROLES = REGION_ROLES + (ChannelRole.DISC_EDGE, ChannelRole.CUP_EDGE)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Image2D:
    """Raster image, data shaped (H, W, C) with C in {1, 3}, values in [0,1]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ShapeMismatch(f"image data must be (H,W) or (H,W,1|3), got {d.shape}")
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise ValueError("image intensities must lie in [0,1]")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int = 0) -> np.ndarray:
        return self.data[:, :, c]


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class ids in {0 background, 1 disc, 2 cup}, shaped (H, W)."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ShapeMismatch(f"labels must be 2-D, got shape {lab.shape}")
        lab = lab.astype(np.uint8)
        if lab.size and lab.max() > CUP:
            bad = int(np.asarray(self.labels).max())
            raise ValueError(f"labels must be in {{0,1,2}}, found {bad}")
        object.__setattr__(self, "labels", _frozen(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class ChannelStack:
    """Named per-class planes, data shaped (H, W, C) with values in [0,1].

    Holds both one-hot training targets and softmax predictions; is_one_hot()
    distinguishes them.
    """

    roles: tuple
    data: np.ndarray

    def __post_init__(self):
        roles = tuple(ChannelRole(r) for r in self.roles)
        if len(set(roles)) != len(roles):
            raise ValueError(f"duplicate channel roles: {roles}")
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != len(roles):
            raise ShapeMismatch(
                f"stack data must be (H,W,{len(roles)}), got {d.shape}"
            )
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise ValueError("stack values must lie in [0,1]")
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def plane(self, role: ChannelRole) -> np.ndarray:
        return self.data[:, :, self.roles.index(ChannelRole(role))]

    def is_one_hot(self) -> bool:
        d = self.data
        binary = np.all((d == 0.0) | (d == 1.0))
        return bool(binary and np.all(d.sum(axis=2) == 1.0))


@dataclass(frozen=True)
class LabelMapping:
    """Ordered (raw 8-bit value -> class id) pairs for ingesting external masks."""

    pairs: tuple = field(default=((0, BACKGROUND), (128, DISC), (255, CUP)))

    def __post_init__(self):
        pairs = tuple((int(r), int(c)) for r, c in self.pairs)
        raws = [r for r, _ in pairs]
        if len(set(raws)) != len(raws):
            raise ConfigError(f"duplicate raw values in mapping: {raws}")
        for r, c in pairs:
            if not 0 <= r <= 255:
                raise ConfigError(f"raw value {r} outside 0..255")
            if c not in VALID_CLASS_IDS:
                raise ConfigError(f"class id {c} outside {{0,1,2}}")
        covered = {c for _, c in pairs}
        if covered != set(VALID_CLASS_IDS):
            raise ConfigError(f"mapping must cover all of {{0,1,2}}, covers {sorted(covered)}")
        object.__setattr__(self, "pairs", pairs)

    def lookup_table(self) -> np.ndarray:
        """256-entry table, -1 where no mapping exists."""
        lut = np.full(256, -1, dtype=np.int16)
        for raw, cid in self.pairs:
            lut[raw] = cid
        return lut

    def raw_for_class(self, class_id: int) -> int:
        """First raw value listed for a class (used when rendering masks to files)."""
        for raw, cid in self.pairs:
            if cid == class_id:
                return raw
        raise ConfigError(f"mapping has no raw value for class {class_id}")

    @classmethod
    def parse(cls, text: str) -> "LabelMapping":
        """Parse '0:0,128:1,255:2' style mapping strings."""
        pairs = []
        for item in text.split(","):
            raw, _, cid = item.partition(":")
            if not cid:
                raise ConfigError(f"bad mapping element {item!r}, expected raw:class")
            pairs.append((int(raw), int(cid)))
        return cls(tuple(pairs))


DEFAULT_MAPPING = LabelMapping()


def remap_labels(raw: Image2D, mapping: LabelMapping) -> LabelMask:
    """Re-code a single-channel image into class labels via the mapping.

    Raw intensities are scaled back to integers 0-255 before lookup; any
    value missing from the mapping raises UnmappedValue.
    """
    if raw.channels != 1:
        raise ShapeMismatch(f"remap_labels needs a single-channel image, got {raw.channels}")
    vals = np.rint(raw.plane(0) * 255.0).astype(np.int64)
    lut = mapping.lookup_table()
    labels = lut[vals]
    if (labels < 0).any():
        missing = int(vals[labels < 0].flat[0])
        raise UnmappedValue(missing)
    return LabelMask(labels.astype(np.uint8))


def render_labels(mask: LabelMask, mapping: LabelMapping = DEFAULT_MAPPING) -> Image2D:
    """Inverse of remap_labels: render class ids back to raw intensities.

    Uses the first raw value listed per class, so remap(render(m)) == m.
    """
    raw = np.zeros(mask.labels.shape, dtype=np.float64)
    for cid in VALID_CLASS_IDS:
        raw[mask.labels == cid] = mapping.raw_for_class(cid) / 255.0
    return Image2D(raw)


def resize_mask_nearest(mask: LabelMask, out_h: int, out_w: int) -> LabelMask:
    """Nearest-neighbor resample of a label mask; never invents new labels."""
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output size must be >= 1, got {out_h}x{out_w}")
    if (out_h, out_w) == (mask.height, mask.width):
        return mask
    rows = (np.arange(out_h) * mask.height) // out_h
    cols = (np.arange(out_w) * mask.width) // out_w
    return LabelMask(mask.labels[np.ix_(rows, cols)])


def resize_image_bilinear(img: Image2D, out_h: int, out_w: int) -> Image2D:
    """Bilinear resample with align-corners sampling; exact at identity size."""
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output size must be >= 1, got {out_h}x{out_w}")
    if (out_h, out_w) == (img.height, img.width):
        return img
    src = img.data

    def grid(n_out, n_in):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out)
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    ys = grid(out_h, img.height)
    xs = grid(out_w, img.width)
    y0 = np.minimum(np.floor(ys).astype(np.intp), img.height - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return Image2D(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# PGM (P5) / PPM (P6) file I/O, 8-bit binary only.
# ---------------------------------------------------------------------------

def _read_pnm_header(blob: bytes, magic: bytes):
    if not blob.startswith(magic):
        raise ValueError(f"not a {magic.decode()} file")
    # header tokens may be separated by whitespace and '#' comments
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.match(rb"(\s+|#[^\n]*\n)+", blob[pos:])
        if m:
            pos += m.end()
        t = re.match(rb"\d+", blob[pos:])
        if not t:
            raise ValueError("malformed PNM header")
        tokens.append(int(t.group()))
        pos += t.end()
    if not blob[pos:pos + 1].isspace():
        raise ValueError("malformed PNM header")
    pos += 1
    w, h, maxval = tokens
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    return w, h, pos


def read_pgm(path) -> Image2D:
    blob = Path(path).read_bytes()
    w, h, pos = _read_pnm_header(blob, b"P5")
    raster = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos)
    return Image2D(raster.reshape(h, w) / 255.0)


def write_pgm(path, img) -> None:
    """Write a single-channel Image2D or a 2-D float array in [0,1]."""
    arr = img.plane(0) if isinstance(img, Image2D) else np.asarray(img)
    if arr.ndim != 2:
        raise ShapeMismatch(f"PGM needs a 2-D plane, got {arr.shape}")
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + data.tobytes())


def read_ppm(path) -> Image2D:
    blob = Path(path).read_bytes()
    w, h, pos = _read_pnm_header(blob, b"P6")
    raster = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=pos)
    return Image2D(raster.reshape(h, w, 3) / 255.0)


def write_ppm(path, img: Image2D) -> None:
    if img.channels != 3:
        raise ShapeMismatch(f"PPM needs 3 channels, got {img.channels}")
    data = np.rint(img.data * 255.0).astype(np.uint8)
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (img.width, img.height) + data.tobytes())


def read_mask(path, mapping: LabelMapping = DEFAULT_MAPPING) -> LabelMask:
    return remap_labels(read_pgm(path), mapping)


def write_mask(path, mask: LabelMask, mapping: LabelMapping = DEFAULT_MAPPING) -> None:
    write_pgm(path, render_labels(mask, mapping))
