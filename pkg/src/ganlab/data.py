"""Synthetic lung phantoms, grayscale image I/O, and dataset splits.

Phantoms stand in for real chest X-rays at desk scale: a bright thorax
field, two dark elliptical lungs, smooth low-frequency noise, and (for the
abnormal classes) bright Gaussian blobs confined to the lung interiors.
The class-conditional blob structure is the only systematic difference
between classes; there are no corner markers or other shortcuts.

All geometry constants live in :class:`PhantomGeometry` and can be written
to / read from a line-oriented ``key = value`` file, so a regenerated
dataset is bit-comparable at the PGM level.  Generation draws only uniform
variates from a PCG64 stream seeded per image.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError
from .seeds import derive_seed

CLASSES = ("normal", "pneumonia_like", "covid_like")


@dataclass
class PhantomGeometry:
    """Fixed constants of the phantom family (fractions of image size)."""

    background: float = 0.55
    lung_level: float = -0.55
    lung_centers_x: tuple[float, float] = (0.33, 0.67)
    lung_center_y: float = 0.52
    lung_axis_x: float = 0.14
    lung_axis_y: float = 0.30
    center_jitter: float = 0.01
    axis_jitter: float = 0.05
    noise_amp: float = 0.04
    noise_grid: int = 4
    blob_sigma_lo: float = 0.07
    blob_sigma_hi: float = 0.11
    blob_amp_lo: float = 0.70
    blob_amp_hi: float = 0.95
    pneumonia_blobs: tuple[int, int] = (1, 3)
    covid_blobs: tuple[int, int] = (2, 5)


def write_phantom_geometry(path, geom: PhantomGeometry) -> None:
    lines = []
    for f in fields(geom):
        v = getattr(geom, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        else:
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_phantom_geometry(path) -> PhantomGeometry:
    kv = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    kwargs = {}
    for f in fields(PhantomGeometry):
        if f.name not in kv:
            continue
        raw = kv[f.name]
        default = getattr(PhantomGeometry(), f.name)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",")]
            caster = type(default[0])
            kwargs[f.name] = tuple(caster(float(p)) if caster is int else caster(p) for p in parts)
        elif isinstance(default, int):
            kwargs[f.name] = int(raw)
        else:
            kwargs[f.name] = float(raw)
    return PhantomGeometry(**kwargs)


@dataclass
class PhantomSpec:
    phantom_class: str
    size: int = 32
    seed: int = 0
    geometry: PhantomGeometry = field(default_factory=PhantomGeometry)

    def __post_init__(self):
        if self.phantom_class not in CLASSES:
            raise ConfigError(f"phantom class {self.phantom_class!r} must be one of {CLASSES}")
        if self.size < 8:
            raise ConfigError("phantom size must be >= 8")


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center-aligned bilinear resampling of a 2D array."""
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x1)]
    c = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    return (a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx + c * wy * (1 - wx) + d * wy * wx)


def _lung_masks(spec: PhantomSpec, rng: np.random.Generator):
    """Interior masks of the two lung ellipses, geometry jittered per image."""
    g = spec.geometry
    s = spec.size
    yy, xx = np.mgrid[0:s, 0:s]
    masks = []
    for cx_frac in g.lung_centers_x:
        cx = (cx_frac + (rng.random() * 2 - 1) * g.center_jitter) * s
        cy = (g.lung_center_y + (rng.random() * 2 - 1) * g.center_jitter) * s
        ax = g.lung_axis_x * s * (1.0 + (rng.random() * 2 - 1) * g.axis_jitter)
        ay = g.lung_axis_y * s * (1.0 + (rng.random() * 2 - 1) * g.axis_jitter)
        masks.append(((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0)
    return masks


def _smooth_noise(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    g = spec.geometry
    grid = max(2, g.noise_grid)
    coarse = (rng.random((grid, grid)) * 2.0 - 1.0) * g.noise_amp
    return bilinear_resize(coarse, spec.size, spec.size)


def _add_blobs(img, masks, count, lungs, spec, rng):
    """Bright Gaussian bumps, hard-masked to the chosen lung interiors."""
    g = spec.geometry
    s = spec.size
    yy, xx = np.mgrid[0:s, 0:s]
    for b in range(count):
        lung = lungs[b]
        mask = masks[lung]
        rows, cols = np.nonzero(mask)
        pick = int(rng.integers(0, rows.size))
        cy, cx = float(rows[pick]), float(cols[pick])
        sigma = (g.blob_sigma_lo + rng.random() * (g.blob_sigma_hi - g.blob_sigma_lo)) * s
        amp = g.blob_amp_lo + rng.random() * (g.blob_amp_hi - g.blob_amp_lo)
        bump = amp * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma)))
        img += bump * mask


def synth_phantom(spec: PhantomSpec) -> np.ndarray:
    """Deterministic [1,S,S] phantom in [-1, 1] for (spec, seed)."""
    g = spec.geometry
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    masks = _lung_masks(spec, rng)
    img = np.full((spec.size, spec.size), g.background)
    for m in masks:
        img[m] = g.lung_level
    img += _smooth_noise(spec, rng)

    if spec.phantom_class == "pneumonia_like":
        lo, hi = g.pneumonia_blobs
        count = int(rng.integers(lo, hi + 1))
        side = int(rng.integers(0, 2))
        _add_blobs(img, masks, count, [side] * count, spec, rng)
    elif spec.phantom_class == "covid_like":
        lo, hi = g.covid_blobs
        count = int(rng.integers(lo, hi + 1))
        lungs = [0, 1] + [int(rng.integers(0, 2)) for _ in range(count - 2)]
        _add_blobs(img, masks, count, lungs, spec, rng)

    np.clip(img, -1.0, 1.0, out=img)
    return img[None, :, :]


def lung_interior_mean(image: np.ndarray, spec: PhantomSpec) -> float:
    """Mean intensity inside the lung masks of the same-seed geometry.

    A hand-crafted statistic used only to certify that the phantom classes
    are separable at all.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    masks = _lung_masks(spec, rng)
    both = masks[0] | masks[1]
    return float(image[0][both].mean())


def make_phantom_dataset(classes, per_class: int, size: int, seed: int, geometry=None):
    """ids and images per class; image i of class c is seeded independently."""
    geometry = geometry or PhantomGeometry()
    out: dict[str, tuple[list[str], np.ndarray]] = {}
    for cls in classes:
        if cls not in CLASSES:
            raise ConfigError(f"unknown phantom class {cls!r}")
        ids = [f"{cls}_{i:05d}" for i in range(per_class)]
        imgs = np.empty((per_class, 1, size, size))
        for i in range(per_class):
            spec = PhantomSpec(cls, size, derive_seed(seed, "phantom", cls, i), geometry)
            imgs[i] = synth_phantom(spec)
        out[cls] = (ids, imgs)
    return out


# ----------------------------------------------------------------------
# PGM (P5, 8-bit) + IAGT image I/O
# ----------------------------------------------------------------------


def save_image(image: np.ndarray, path) -> None:
    """[-1,1] single-channel image to binary PGM (or raw IAGT by suffix)."""
    path = Path(path)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[0] != 1:
            raise ContractError(f"expected single-channel image, got shape {image.shape}")
        image = image[0]
    if path.suffix == ".iagt":
        from .tensor import save_iagt

        save_iagt(path, image[None])
        return
    levels = np.rint((image + 1.0) * 0.5 * 255.0)
    levels = np.clip(levels, 0, 255).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(levels.tobytes(order="C"))


def _read_pgm_token(blob: bytes, pos: int, path) -> tuple[bytes, int]:
    while pos < len(blob):
        ch = blob[pos : pos + 1]
        if ch == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= len(blob):
        raise FormatError(f"{path}: unexpected end of header at byte {pos}")
    start = pos
    while pos < len(blob) and not blob[pos : pos + 1].isspace():
        pos += 1
    return blob[start:pos], pos


def load_image(path, size: int | None = None) -> np.ndarray:
    """Read PGM P5 (or IAGT) as a [1,H,W] array in [-1,1], optionally resized."""
    path = Path(path)
    if path.suffix == ".iagt":
        from .tensor import load_iagt

        arr = load_iagt(path)
        img = arr.reshape(arr.shape[-2], arr.shape[-1])
    else:
        blob = path.read_bytes()
        magic, pos = _read_pgm_token(blob, 0, path)
        if magic != b"P5":
            raise FormatError(f"{path}: not a binary PGM (magic {magic!r} at byte 0)")
        wtok, pos = _read_pgm_token(blob, pos, path)
        htok, pos = _read_pgm_token(blob, pos, path)
        mtok, pos = _read_pgm_token(blob, pos, path)
        try:
            w, h, maxval = int(wtok), int(htok), int(mtok)
        except ValueError as exc:
            raise FormatError(f"{path}: bad header token near byte {pos}") from exc
        if maxval != 255:
            raise FormatError(f"{path}: unsupported maxval {maxval} at byte {pos}")
        pos += 1  # single whitespace byte after maxval
        need = w * h
        if len(blob) - pos < need:
            raise FormatError(f"{path}: truncated pixel data at byte {pos} (need {need} bytes)")
        raw = np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos)
        img = raw.astype(np.float64).reshape(h, w) / 255.0 * 2.0 - 1.0
    if size is not None and img.shape != (size, size):
        img = bilinear_resize(img, size, size)
    return img[None, :, :]


def save_grid(images: np.ndarray, path, per_row: int = 8) -> None:
    """Tile a [M,1,S,S] batch into one PGM mosaic."""
    images = np.asarray(images, dtype=np.float64)
    m, _, s, _ = images.shape
    cols = min(per_row, m)
    rows = (m + cols - 1) // cols
    canvas = np.full((rows * s, cols * s), -1.0)
    for i in range(m):
        r, c = divmod(i, cols)
        canvas[r * s : (r + 1) * s, c * s : (c + 1) * s] = images[i, 0]
    save_image(canvas[None], path)


# ----------------------------------------------------------------------
# dataset directories and splits
# ----------------------------------------------------------------------


def write_dataset(root, data: dict[str, tuple[list[str], np.ndarray]]) -> None:
    root = Path(root)
    for cls, (ids, imgs) in sorted(data.items()):
        d = root / cls
        d.mkdir(parents=True, exist_ok=True)
        for i, img_id in enumerate(ids):
            save_image(imgs[i], d / f"{img_id}.pgm")


def load_dataset(root, size: int | None = None) -> dict[str, tuple[list[str], np.ndarray]]:
    root = Path(root)
    out = {}
    for cls_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        ids, imgs = [], []
        for f in sorted(cls_dir.glob("*.pgm")):
            ids.append(f.stem)
            imgs.append(load_image(f, size=size))
        if ids:
            out[cls_dir.name] = (ids, np.stack(imgs))
    return out


@dataclass
class SplitManifest:
    entries: list[tuple[str, str, str]]  # (id, class, role) with role train|test|pool
    seed: int
    source: str = ""

    def ids(self, cls: str, role: str) -> list[str]:
        return [i for i, c, r in self.entries if c == cls and r == role]

    def check(self) -> None:
        seen = {}
        for i, c, r in self.entries:
            key = (c, i)
            if key in seen:
                raise ContractError(f"image {i} of class {c} assigned twice ({seen[key]} and {r})")
            seen[key] = r

    def save(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "class", "role"])
            for row in self.entries:
                w.writerow(row)

    @classmethod
    def load(cls, path, seed: int = 0) -> "SplitManifest":
        entries = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                entries.append((row["id"], row["class"], row["role"]))
        return cls(entries, seed, source=str(path))


def make_split(
    listing: dict[str, list[str]],
    test_per_class: int,
    seed: int,
    train_classes: list[str] | None = None,
) -> SplitManifest:
    """Seeded sampling without replacement into test/train roles.

    Classes not in ``train_classes`` keep their leftover images with role
    ``pool``: excluded from GAN training but available as augmentation
    inputs.
    """
    entries = []
    for cls in sorted(listing):
        ids = sorted(listing[cls])
        if len(ids) < test_per_class:
            raise ConfigError(f"class {cls} has {len(ids)} images, cannot reserve {test_per_class} for test")
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "split", cls)))
        order = rng.permutation(len(ids))
        test_idx = set(int(i) for i in order[:test_per_class])
        rest_role = "train" if train_classes is None or cls in train_classes else "pool"
        for i, img_id in enumerate(ids):
            entries.append((img_id, cls, "test" if i in test_idx else rest_role))
    manifest = SplitManifest(entries, seed)
    manifest.check()
    return manifest
