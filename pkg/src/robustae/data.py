"""Dataset ingestion, synthetic manifolds, and salt-and-pepper corruption.

Data matrices follow the columns-as-points convention: an ImageSet holds one
vectorized image per column, pixels scaled into [0, 1].  MNIST IDX files and
CIFAR-10 binary batches are parsed from disk (never downloaded); synthetic
manifolds provide desk-scale stand-ins.
"""

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numkit
from .numkit import Rng

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ImageSet:
    """n x count matrix of vectorized images with pixel geometry.

    Columns are data points; n = height * width * channels.  Color images
    are stored planar (all R rows, then G, then B), matching the CIFAR
    binary layout.
    """

    images: np.ndarray
    height: int
    width: int
    channels: int = 1

    def __post_init__(self):
        a = np.asarray(self.images, dtype=np.float64)
        if a is not self.images:
            object.__setattr__(self, "images", a)
        if a.ndim != 2:
            raise ValueError(f"images must be 2-D, got ndim={a.ndim}")
        n = self.height * self.width * self.channels
        if a.shape[0] != n:
            raise ValueError(
                f"images have {a.shape[0]} rows but geometry "
                f"{self.height}x{self.width}x{self.channels} needs {n}"
            )
        if a.size == 0:  # zero-column sets arise from empty splits
            return
        if not np.all(np.isfinite(a)):
            raise ValueError("images contain non-finite values")
        lo = float(a.min())
        hi = float(a.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: range [{lo}, {hi}]")

    @property
    def count(self):
        return self.images.shape[1]

    @property
    def pixels(self):
        return self.images.shape[0]

    def with_images(self, images):
        """Same geometry, new pixel matrix."""
        return ImageSet(images, self.height, self.width, self.channels)

    def with_geometry(self, height, width, channels=1):
        """Reinterpret the flat pixel vectors under a new geometry."""
        return ImageSet(self.images, height, width, channels)

    def take(self, indices):
        cols = np.ascontiguousarray(self.images[:, indices])
        return self.with_images(cols)

    def as_stack(self):
        """View as (count, channels, height, width)."""
        return self.images.T.reshape(self.count, self.channels, self.height, self.width)


@dataclass(frozen=True)
class CorruptionSpec:
    """Salt-and-pepper model: each entry independently hit with probability `ratio`."""

    ratio: float
    salt_value: float = 1.0
    pepper_value: float = 0.0
    salt_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        if not 0.0 <= self.salt_probability <= 1.0:
            raise ValueError(f"salt_probability must be in [0, 1], got {self.salt_probability}")
        for name in ("salt_value", "pepper_value"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def to_dict(self):
        return {
            "ratio": self.ratio,
            "salt_value": self.salt_value,
            "pepper_value": self.pepper_value,
            "salt_probability": self.salt_probability,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class CorruptedDataset:
    """Paired clean/corrupted images plus the boolean corruption mask."""

    corrupted: ImageSet
    mask: np.ndarray
    spec: CorruptionSpec
    clean: ImageSet = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask is not self.mask:
            object.__setattr__(self, "mask", mask)
        if mask.shape != self.corrupted.images.shape:
            raise ValueError(
                f"mask shape {mask.shape} != corrupted shape {self.corrupted.images.shape}"
            )
        if self.clean is not None:
            c = self.corrupted.images
            x = self.clean.images
            if x.shape != c.shape:
                raise ValueError(f"clean shape {x.shape} != corrupted shape {c.shape}")
            consistent = np.where(
                mask,
                (c == self.spec.salt_value) | (c == self.spec.pepper_value),
                c == x,
            )
            if not consistent.all():
                raise ValueError("corrupted data inconsistent with clean/mask/spec")

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        numkit.write_rmat(d / "corrupted.rmat", self.corrupted.images)
        numkit.write_rmat(d / "mask.rmat", self.mask.astype(np.float64))
        if self.clean is not None:
            numkit.write_rmat(d / "clean.rmat", self.clean.images)
        manifest = {
            "schema_version": 1,
            "height": self.corrupted.height,
            "width": self.corrupted.width,
            "channels": self.corrupted.channels,
            "count": self.corrupted.count,
            "spec": self.spec.to_dict(),
            "has_clean": self.clean is not None,
        }
        with open(d / MANIFEST_NAME, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        with open(d / MANIFEST_NAME) as fh:
            manifest = json.load(fh)
        if manifest.get("schema_version") != 1:
            raise ValueError(f"unsupported dataset schema {manifest.get('schema_version')}")
        geom = (manifest["height"], manifest["width"], manifest["channels"])
        corrupted = ImageSet(numkit.read_rmat(d / "corrupted.rmat"), *geom)
        mask = numkit.read_rmat(d / "mask.rmat") > 0.5
        clean = None
        if manifest.get("has_clean"):
            clean = ImageSet(numkit.read_rmat(d / "clean.rmat"), *geom)
        return cls(
            corrupted=corrupted,
            mask=mask,
            spec=CorruptionSpec.from_dict(manifest["spec"]),
            clean=clean,
        )


# --- loaders ------------------------------------------------------------------

_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801
_CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 pixel bytes


def load_mnist(images_path, labels_path):
    """Parse MNIST IDX image/label files into an ImageSet (labels validate only)."""
    raw = Path(images_path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"truncated IDX image file {images_path}")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IDX_IMAGE_MAGIC:
        raise ValueError(f"bad IDX magic 0x{magic:08x} in {images_path}")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise ValueError(f"truncated IDX image file {images_path}: {len(raw)} < {need} bytes")
    if len(raw) > need:
        raise ValueError(f"trailing bytes in IDX image file {images_path}")

    lraw = Path(labels_path).read_bytes()
    if len(lraw) < 8:
        raise ValueError(f"truncated IDX label file {labels_path}")
    lmagic, lcount = struct.unpack(">II", lraw[:8])
    if lmagic != _IDX_LABEL_MAGIC:
        raise ValueError(f"bad IDX magic 0x{lmagic:08x} in {labels_path}")
    if lcount != count:
        raise ValueError(f"IDX image/label count mismatch: {count} images vs {lcount} labels")
    if len(lraw) != 8 + lcount:
        raise ValueError(f"IDX label file {labels_path} has wrong size")

    px = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = np.ascontiguousarray(px.reshape(count, rows * cols).T.astype(np.float64) / 255.0)
    return ImageSet(images, height=rows, width=cols, channels=1)


def load_cifar10(batch_paths):
    """Parse CIFAR-10 binary batches; columns of 3072 planar RGB pixels in [0, 1]."""
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    blocks = []
    for path in batch_paths:
        raw = Path(path).read_bytes()
        if len(raw) == 0:
            raise ValueError(f"empty CIFAR batch {path}")
        if len(raw) % _CIFAR_RECORD:
            raise ValueError(
                f"CIFAR batch {path} has {len(raw)} bytes, not a multiple of {_CIFAR_RECORD}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        labels = records[:, 0]
        if labels.max(initial=0) > 9:
            raise ValueError(f"CIFAR batch {path} has label byte > 9")
        blocks.append(records[:, 1:].astype(np.float64) / 255.0)
    pixels = np.ascontiguousarray(np.concatenate(blocks, axis=0).T)
    return ImageSet(pixels, height=32, width=32, channels=3)


# --- synthetic manifolds --------------------------------------------------------

SYNTH_KINDS = ("circle", "swiss_roll", "low_rank")


def _minmax01(p):
    lo = p.min()
    span = p.max() - lo
    if span < 1e-12:
        return np.full_like(p, 0.5)
    return (p - lo) / span


def synth_manifold(kind, ambient_dim, count, noise_sigma=0.0, seed=0, rank=5,
                   height=None, width=None):
    """Seeded synthetic point clouds on simple manifolds, scaled into [0, 1].

    circle      unit circle pushed through a random orthonormal 2-frame,
                then the fixed affine map (x + 1) / 2 (needs ambient_dim >= 2)
    swiss_roll  (t cos t, h, t sin t), t in [1.5pi, 4.5pi], h in [0, 21],
                random orthonormal 3-frame, min-max rescale (ambient_dim >= 3)
    low_rank    product of seeded Gaussian factors whose column space contains
                the all-ones direction, so the min-max rescale into [0, 1]
                preserves the exact rank (ambient_dim >= rank)

    Gaussian noise of scale `noise_sigma` is added before rescaling; results
    are clipped into [0, 1].  Identical seeds give identical matrices.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = Rng(seed)

    if kind == "circle":
        if ambient_dim < 2:
            raise ValueError("circle embedding needs ambient_dim >= 2")
        frame = numkit.orthonormal_columns(rng, ambient_dim, 2)
        theta = rng.random(count) * (2.0 * math.pi)
        points = frame @ np.vstack([np.cos(theta), np.sin(theta)])
        if noise_sigma > 0:
            points = points + rng.normal(points.shape, sigma=noise_sigma)
        pixels = np.clip((points + 1.0) / 2.0, 0.0, 1.0)
    elif kind == "swiss_roll":
        if ambient_dim < 3:
            raise ValueError("swiss_roll embedding needs ambient_dim >= 3")
        frame = numkit.orthonormal_columns(rng, ambient_dim, 3)
        t = 1.5 * math.pi * (1.0 + 2.0 * rng.random(count))
        h = 21.0 * rng.random(count)
        points = frame @ np.vstack([t * np.cos(t), h, t * np.sin(t)])
        if noise_sigma > 0:
            points = points + rng.normal(points.shape, sigma=noise_sigma)
        pixels = _minmax01(points)
    elif kind == "low_rank":
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        if ambient_dim < rank:
            raise ValueError(f"low_rank needs ambient_dim >= rank, got {ambient_dim} < {rank}")
        left = np.empty((ambient_dim, rank))
        left[:, 0] = 1.0
        if rank > 1:
            left[:, 1:] = rng.normal((ambient_dim, rank - 1))
        right = rng.normal((rank, count))
        points = left @ right
        if noise_sigma > 0:
            points = points + rng.normal(points.shape, sigma=noise_sigma)
        pixels = _minmax01(points)
    else:
        raise ValueError(f"unknown manifold kind {kind!r}; expected one of {SYNTH_KINDS}")

    if (height is None) != (width is None):
        raise ValueError("height and width must be given together")
    if height is None:
        height, width = ambient_dim, 1
    if height * width != ambient_dim:
        raise ValueError(f"geometry {height}x{width} does not match ambient_dim {ambient_dim}")
    return ImageSet(np.ascontiguousarray(pixels), height=height, width=width, channels=1)


# --- corruption and splitting ---------------------------------------------------

def corrupt(clean, spec):
    """Apply independent salt-and-pepper corruption to every pixel.

    Two uniform matrices are drawn from the spec seed in a fixed order:
    the first selects corrupted entries (u < ratio), the second picks salt
    versus pepper.  Deterministic under the seed.
    """
    rng = Rng(spec.seed)
    shape = clean.images.shape
    u_select = rng.random(shape)
    u_value = rng.random(shape)
    mask = u_select < spec.ratio
    values = np.where(u_value < spec.salt_probability, spec.salt_value, spec.pepper_value)
    corrupted = np.where(mask, values, clean.images)
    return CorruptedDataset(
        corrupted=clean.with_images(corrupted),
        mask=mask,
        spec=spec,
        clean=clean,
    )


def split(images, sizes, seed):
    """Disjoint column subsets chosen by a seeded shuffle."""
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise ValueError(f"split sizes must be non-negative, got {sizes}")
    total = sum(sizes)
    if total > images.count:
        raise ValueError(f"split oversubscribed: need {total} columns, have {images.count}")
    perm = Rng(seed).permutation(images.count)
    parts = []
    offset = 0
    for s in sizes:
        parts.append(images.take(perm[offset : offset + s]))
        offset += s
    return parts


# --- PGM / PPM image files ------------------------------------------------------

def _quantize(a):
    return np.clip(np.rint(np.asarray(a) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    """Binary PGM (P5, maxval 255) from an (h, w) float image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM wants an (h, w) image, got shape {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(_quantize(img).tobytes())


def write_ppm(path, image):
    """Binary PPM (P6, maxval 255) from a planar (3, h, w) float image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"PPM wants a (3, h, w) image, got shape {img.shape}")
    _, h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(_quantize(np.moveaxis(img, 0, 2)).tobytes())


def _read_pnm(path, magic, values_per_pixel):
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"truncated header in {path}")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != magic:
        raise ValueError(f"expected {magic.decode()} file, got {tokens[0]!r} in {path}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval} in {path}")
    need = w * h * values_per_pixel
    data = np.frombuffer(raw, dtype=np.uint8, count=need, offset=pos)
    return data, h, w


def read_pgm(path):
    data, h, w = _read_pnm(path, b"P5", 1)
    return data.reshape(h, w).astype(np.float64) / 255.0


def read_ppm(path):
    data, h, w = _read_pnm(path, b"P6", 3)
    return np.moveaxis(data.reshape(h, w, 3), 2, 0).astype(np.float64) / 255.0


def image_from_column(imageset, index):
    """Extract column `index` as an (h, w) or planar (3, h, w) image array."""
    col = imageset.images[:, index]
    if imageset.channels == 1:
        return col.reshape(imageset.height, imageset.width)
    return col.reshape(imageset.channels, imageset.height, imageset.width)


def write_image(path, imageset, index):
    """Write one column as PGM (grayscale) or PPM (3-channel)."""
    img = image_from_column(imageset, index)
    if imageset.channels == 1:
        write_pgm(path, img)
    elif imageset.channels == 3:
        write_ppm(path, img)
    else:
        raise ValueError(f"cannot write image with {imageset.channels} channels")
