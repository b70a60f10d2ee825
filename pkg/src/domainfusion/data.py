"""Datasets: in-memory representation, on-disk format, synthetic domains.

Images are stored as unsigned bytes (N, C, H, W) with uint16 labels. The
synthetic triad (solid-shapes / outline-shapes / striped-noise) gives a
target domain, a geometrically related candidate, and an unrelated one, so
outer-dataset ranking has a known expected order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import (
    BadMagicError,
    DimensionError,
    InsufficientClassError,
    LabelRangeError,
    ShapeError,
    TruncatedFileError,
)
from .rng import substream

DFDS_MAGIC = b"DFDS"
DFDS_VERSION = 1

DOMAIN_KINDS = ("solid-shapes", "outline-shapes", "striped-noise")
GLYPHS = ("square", "disc", "triangle", "cross")


@dataclass(frozen=True)
class LabeledImageSet:
    """Byte-pixel images with integer class labels."""

    pixels: np.ndarray  # uint8 (N, C, H, W)
    labels: np.ndarray  # uint16 (N,)
    num_classes: int
    name: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        lb = np.asarray(self.labels, dtype=np.uint16)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "labels", lb)
        if px.ndim != 4:
            raise DimensionError(f"pixels must be (N,C,H,W), got {px.shape}")
        n, c, h, w = px.shape
        if n < 1 or h < 1 or w < 1:
            raise DimensionError(f"empty dataset dimensions {px.shape}")
        if c not in (1, 3):
            raise DimensionError(f"channel count must be 1 or 3, got {c}")
        if lb.shape != (n,):
            raise DimensionError(f"labels shape {lb.shape} != ({n},)")
        if self.num_classes < 1:
            raise DimensionError(f"num_classes must be >= 1, got {self.num_classes}")
        if lb.size and int(lb.max()) >= self.num_classes:
            raise LabelRangeError(
                f"label {int(lb.max())} >= num_classes {self.num_classes}"
            )

    def __len__(self) -> int:
        return self.pixels.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.pixels.shape[1:]

    def as_float_rows(self) -> np.ndarray:
        """Flattened float32 rows in [0, 1]; the network-boundary view."""
        n = len(self)
        return (self.pixels.reshape(n, -1).astype(np.float32)) / np.float32(255.0)

    def class_indices(self, label: int) -> np.ndarray:
        return np.nonzero(self.labels == label)[0]


@dataclass(frozen=True)
class SynthDomainSpec:
    """Parameters of one synthetic image domain."""

    kind: str = "solid-shapes"
    side: int = 16
    classes: int = 4
    pos_jitter: float = 2.0      # pixels
    size_jitter: float = 0.2     # relative
    max_rotation: float = 15.0   # degrees
    noise_sigma: float = 8.0     # pixel units, 0..32
    fixed_phase: bool = True     # striped-noise only: freeze stripe geometry

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise DimensionError(f"unknown domain kind {self.kind!r}")
        if self.side < 8:
            raise DimensionError("side length must be >= 8")
        if self.classes < 1:
            raise DimensionError("need at least one class")
        if self.pos_jitter < 0 or self.size_jitter < 0 or self.max_rotation < 0:
            raise DimensionError("jitter ranges must be non-negative")
        if not 0 <= self.noise_sigma <= 32:
            raise DimensionError("noise_sigma must be in [0, 32]")


@dataclass(frozen=True)
class DomainPair:
    """Target plus outer dataset with disjoint label ranges."""

    target: LabeledImageSet
    outer: LabeledImageSet
    label_offset: int

    def __post_init__(self):
        t_max = int(self.target.labels.max())
        o_min = int(self.outer.labels.min())
        if o_min < self.target.num_classes or t_max >= self.label_offset:
            raise LabelRangeError("target and outer label ranges overlap")

    @property
    def combined_classes(self) -> int:
        return self.outer.num_classes


# ---------------------------------------------------------------------------
# DFDS on-disk format.

def save_dfds(dataset: LabeledImageSet, path) -> None:
    """Write the dataset in DFDS layout (all integers little-endian)."""
    n, c, h, w = dataset.pixels.shape
    for dim, limit in ((n, 0xFFFFFFFF), (c, 0xFFFF), (h, 0xFFFF), (w, 0xFFFF)):
        if dim > limit:
            raise DimensionError(f"dimension {dim} overflows the format field")
    if dataset.num_classes > 0xFFFF:
        raise DimensionError("class count overflows the format field")
    with open(path, "wb") as fh:
        fh.write(DFDS_MAGIC)
        fh.write(struct.pack("<B", DFDS_VERSION))
        fh.write(struct.pack("<IHHHH", n, c, h, w, dataset.num_classes))
        fh.write(dataset.labels.astype("<u2").tobytes())
        fh.write(np.ascontiguousarray(dataset.pixels).tobytes())


def load_dfds(path, name: str | None = None) -> LabeledImageSet:
    """Read a DFDS file, validating magic, size, and label invariants."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != DFDS_MAGIC:
        raise BadMagicError(f"not a DFDS file: {path}")
    if len(blob) < 17:
        raise TruncatedFileError(f"truncated DFDS header: {path}")
    version = blob[4]
    if version != DFDS_VERSION:
        raise DimensionError(f"unsupported DFDS version {version}")
    n, c, h, w, k = struct.unpack_from("<IHHHH", blob, 5)
    if n < 1 or h < 1 or w < 1 or k < 1 or c not in (1, 3):
        raise DimensionError(f"invalid DFDS dimensions N={n} C={c} H={h} W={w} K={k}")
    n_pixels = n * c * h * w
    expected = 17 + 2 * n + n_pixels
    if len(blob) < expected:
        raise TruncatedFileError(
            f"DFDS payload short: have {len(blob)} bytes, need {expected}"
        )
    labels = np.frombuffer(blob, dtype="<u2", count=n, offset=17).copy()
    if labels.size and int(labels.max()) >= k:
        raise LabelRangeError(f"stored label {int(labels.max())} >= K={k}")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=n_pixels, offset=17 + 2 * n)
    pixels = pixels.reshape(n, c, h, w).copy()
    if name is None:
        name = str(path)
    return LabeledImageSet(pixels=pixels, labels=labels, num_classes=k, name=name)


# ---------------------------------------------------------------------------
# Synthetic domains.

_SS = 4  # supersampling factor for glyph coverage


def _glyph_inside(glyph: str, gx: np.ndarray, gy: np.ndarray, radius: float):
    """Inside test in the glyph frame (unrotated, centered)."""
    if glyph == "square":
        return np.maximum(np.abs(gx), np.abs(gy)) <= radius
    if glyph == "disc":
        return gx * gx + gy * gy <= radius * radius
    if glyph == "triangle":
        # upward equilateral triangle inscribed in the radius
        top = gy >= -radius
        left = (np.sqrt(3.0) * gx + gy) <= radius
        right = (-np.sqrt(3.0) * gx + gy) <= radius
        return top & left & right
    if glyph == "cross":
        arm = radius / 3.0
        horiz = (np.abs(gy) <= arm) & (np.abs(gx) <= radius)
        vert = (np.abs(gx) <= arm) & (np.abs(gy) <= radius)
        return horiz | vert
    raise DimensionError(f"unknown glyph {glyph!r}")


def _glyph_coverage(
    glyph: str, side: int, cx: float, cy: float, radius: float, angle_deg: float,
    inner_radius: float | None = None,
) -> np.ndarray:
    """Supersampled coverage in [0,1]; optional inner cut for outlines."""
    n = side * _SS
    coords = (np.arange(n) + 0.5) / _SS
    xs, ys = np.meshgrid(coords, coords)
    theta = np.deg2rad(angle_deg)
    dx = xs - cx
    dy = ys - cy
    gx = np.cos(theta) * dx + np.sin(theta) * dy
    gy = -np.sin(theta) * dx + np.cos(theta) * dy
    mask = _glyph_inside(glyph, gx, gy, radius)
    if inner_radius is not None and inner_radius > 0:
        mask &= ~_glyph_inside(glyph, gx, gy, inner_radius)
    cover = mask.astype(np.float64).reshape(side, _SS, side, _SS).mean(axis=(1, 3))
    return cover


def _render_shape(spec: SynthDomainSpec, class_id: int, rng) -> np.ndarray:
    glyph = GLYPHS[class_id % len(GLYPHS)]
    side = spec.side
    cx = side / 2.0 + rng.uniform(-spec.pos_jitter, spec.pos_jitter)
    cy = side / 2.0 + rng.uniform(-spec.pos_jitter, spec.pos_jitter)
    radius = 0.3 * side * (1.0 + rng.uniform(-spec.size_jitter, spec.size_jitter))
    angle = rng.uniform(0.0, spec.max_rotation)
    inner = radius - 1.0 if spec.kind == "outline-shapes" else None
    cover = _glyph_coverage(glyph, side, cx, cy, radius, angle, inner)
    return cover * 255.0


def _render_stripes(spec: SynthDomainSpec, class_id: int, rng) -> np.ndarray:
    side = spec.side
    theta = np.deg2rad(45.0 * (class_id % 4))
    if spec.fixed_phase:
        wavelength = 6.0
        phase = 0.0
    else:
        wavelength = rng.uniform(4.0, 8.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
    coords = np.arange(side) + 0.5
    xs, ys = np.meshgrid(coords, coords)
    proj = np.cos(theta) * xs + np.sin(theta) * ys
    return 127.5 * (1.0 + np.sin(2.0 * np.pi * proj / wavelength + phase))


def synth_domain(
    spec: SynthDomainSpec, n_per_class: int, seed: int
) -> LabeledImageSet:
    """Render exactly n_per_class images per class, deterministic in seed."""
    if n_per_class < 1:
        raise DimensionError("n_per_class must be >= 1")
    total = spec.classes * n_per_class
    pixels = np.empty((total, 1, spec.side, spec.side), dtype=np.uint8)
    labels = np.empty(total, dtype=np.uint16)
    idx = 0
    for class_id in range(spec.classes):
        for j in range(n_per_class):
            rng = substream(seed, spec.kind, class_id, j)
            if spec.kind == "striped-noise":
                img = _render_stripes(spec, class_id, rng)
            else:
                img = _render_shape(spec, class_id, rng)
            if spec.noise_sigma > 0:
                img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
            pixels[idx, 0] = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
            labels[idx] = class_id
            idx += 1
    return LabeledImageSet(
        pixels=pixels, labels=labels, num_classes=spec.classes, name=spec.kind
    )


# ---------------------------------------------------------------------------
# Reshaping and sampling operations.

def resize_bilinear(dataset: LabeledImageSet, new_h: int, new_w: int) -> LabeledImageSet:
    """Half-pixel-center bilinear resize with edge clamping."""
    if new_h < 1 or new_w < 1:
        raise DimensionError("target dimensions must be >= 1")
    n, c, h, w = dataset.pixels.shape
    if (new_h, new_w) == (h, w):
        return replace(dataset, pixels=dataset.pixels.copy())
    planes = dataset.pixels.reshape(n * c, h, w).astype(np.float64)
    out = kernels.resize_bilinear(planes, new_h, new_w)
    out_bytes = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return replace(dataset, pixels=out_bytes.reshape(n, c, new_h, new_w))


def balance_subsample(dataset: LabeledImageSet, n_total: int, seed: int) -> LabeledImageSet:
    """Uniform without-replacement draw of n_total/K items per class."""
    k = dataset.num_classes
    if n_total % k:
        raise DimensionError(f"n_total {n_total} not divisible by K={k}")
    per_class = n_total // k
    chosen = []
    for label in range(k):
        members = dataset.class_indices(label)
        if members.size < per_class:
            raise InsufficientClassError(
                f"class {label} has {members.size} members, need {per_class}"
            )
        rng = substream(seed, "subsample", label)
        take = rng.choice(members, size=per_class, replace=False)
        chosen.append(np.sort(take))
    order = np.concatenate(chosen)
    return replace(
        dataset, pixels=dataset.pixels[order].copy(), labels=dataset.labels[order].copy()
    )


def split_balanced(
    dataset: LabeledImageSet, n_first: int, n_second: int, seed: int
) -> tuple[LabeledImageSet, LabeledImageSet]:
    """Two disjoint class-balanced subsets (e.g. train/val)."""
    k = dataset.num_classes
    if n_first % k or n_second % k:
        raise DimensionError("split sizes must be divisible by K")
    a, b = n_first // k, n_second // k
    first_idx, second_idx = [], []
    for label in range(k):
        members = dataset.class_indices(label)
        if members.size < a + b:
            raise InsufficientClassError(
                f"class {label} has {members.size} members, need {a + b}"
            )
        rng = substream(seed, "split", label)
        take = rng.choice(members, size=a + b, replace=False)
        first_idx.append(np.sort(take[:a]))
        second_idx.append(np.sort(take[a:]))
    fi = np.concatenate(first_idx)
    si = np.concatenate(second_idx)
    first = replace(dataset, pixels=dataset.pixels[fi].copy(), labels=dataset.labels[fi].copy())
    second = replace(dataset, pixels=dataset.pixels[si].copy(), labels=dataset.labels[si].copy())
    return first, second


def merge_domains(
    target: LabeledImageSet, outer: LabeledImageSet, collapse_outer: bool = False
) -> DomainPair:
    """Offset outer labels past the target label space.

    With ``collapse_outer`` every outer image maps to the single class K_T
    (ablation mode); otherwise outer class j becomes K_T + j.
    """
    if target.image_shape != outer.image_shape:
        raise ShapeError(
            f"image shapes differ: {target.image_shape} vs {outer.image_shape}"
        )
    offset = target.num_classes
    if collapse_outer:
        new_labels = np.full(len(outer), offset, dtype=np.uint16)
        combined = offset + 1
    else:
        new_labels = (outer.labels.astype(np.int64) + offset).astype(np.uint16)
        combined = offset + outer.num_classes
    shifted = LabeledImageSet(
        pixels=outer.pixels,
        labels=new_labels,
        num_classes=combined,
        name=outer.name,
    )
    return DomainPair(target=target, outer=shifted, label_offset=offset)


# ---------------------------------------------------------------------------
# PGM sample grids.

def write_pgm_grid(dataset: LabeledImageSet, path, columns: int = 8) -> None:
    """Binary PGM (P5) contact sheet; RGB images are reduced to luma."""
    n, c, h, w = dataset.pixels.shape
    rows = (n + columns - 1) // columns
    canvas = np.zeros((rows * h, columns * w), dtype=np.uint8)
    for i in range(n):
        img = dataset.pixels[i].astype(np.float64)
        if c == 3:
            plane = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
        else:
            plane = img[0]
        r, col = divmod(i, columns)
        canvas[r * h : (r + 1) * h, col * w : (col + 1) * w] = np.clip(
            np.floor(plane + 0.5), 0, 255
        ).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode("ascii"))
        fh.write(canvas.tobytes())
