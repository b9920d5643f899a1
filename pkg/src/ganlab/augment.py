"""Augmentation protocols and their count manifests.

Three ways to enlarge a single-class training set:

* conditional generation: feed every available input image (any class)
  through a trained dual-input generator with k fresh latents each; all
  outputs carry the generator's training class,
* unconditional generation: k latent draws per training image of the
  target class (no conditioning path exists, so other classes cannot
  contribute),
* classical transforms: per training image, n independent random
  rotation / shift / zoom resamples.

Each mode has a pure count-level manifest builder so the bookkeeping can be
checked at full dataset scale without materializing any pixels.  For the
conditional mode two total formulas exist: the default counts the target
class originals plus the generated images; ``table_arithmetic=True`` also
counts the other classes' originals into the training set total.  Both are
kept because published count tables for this scheme follow the second
convention while the accompanying text implies the first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, IntegrityError
from .models import NetworkParams, generate
from .seeds import derive_seed, rng_for


@dataclass
class ProvenanceRecord:
    out_id: str
    out_class: str
    method: str
    source_id: str
    seed: int
    params: str = ""


@dataclass
class AugmentManifest:
    method: str  # iagan | dcgan | traditional
    target_class: str
    originals: dict[str, int]  # per-class original counts available as inputs
    counted_originals: int  # originals counted into the training-set total
    generated: int
    records: list[ProvenanceRecord] = field(default_factory=list)
    formula: str = ""
    table_arithmetic: bool = False

    @property
    def total(self) -> int:
        return self.counted_originals + self.generated

    def check(self) -> None:
        """Recount provenance records against the declared formula."""
        if len(self.records) != self.generated:
            raise IntegrityError(
                f"manifest lists {self.generated} generated images but has {len(self.records)} records"
            )
        for r in self.records:
            if r.out_class != self.target_class:
                raise IntegrityError(f"record {r.out_id} labelled {r.out_class}, expected {self.target_class}")
        expect = _expected_counts(self)
        if (self.counted_originals, self.generated) != expect:
            raise IntegrityError(
                f"counts ({self.counted_originals} originals, {self.generated} generated) "
                f"violate formula {self.formula!r}, expected {expect}"
            )

    def save(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["out_id", "class", "method", "source_id", "seed", "params"])
            for r in self.records:
                w.writerow([r.out_id, r.out_class, r.method, r.source_id, r.seed, r.params])


def _expected_counts(m: AugmentManifest) -> tuple[int, int]:
    target_orig = m.originals[m.target_class]
    all_orig = sum(m.originals.values())
    if m.method == "iagan":
        if all_orig and len(m.records) % all_orig != 0:
            raise IntegrityError(
                f"{len(m.records)} generated images is not a whole multiple of {all_orig} inputs"
            )
        counted = all_orig if m.table_arithmetic else target_orig
        return counted, len(m.records)
    if target_orig and len(m.records) % target_orig != 0:
        raise IntegrityError(
            f"{len(m.records)} generated images is not a whole multiple of {target_orig} originals"
        )
    return target_orig, len(m.records)


def build_manifest(
    method: str,
    originals: dict[str, int],
    target_class: str,
    k: int = 3,
    n: int = 8,
    seed: int = 0,
    table_arithmetic: bool = False,
) -> AugmentManifest:
    """Count-level manifest with one provenance record per generated image."""
    if target_class not in originals:
        raise ConfigError(f"target class {target_class!r} not among originals {sorted(originals)}")
    records: list[ProvenanceRecord] = []
    if method == "iagan":
        for cls in sorted(originals):
            for i in range(originals[cls]):
                src = f"{cls}_{i:06d}"
                for j in range(k):
                    records.append(
                        ProvenanceRecord(
                            out_id=f"gen_{target_class}_{src}_{j}",
                            out_class=target_class,
                            method="iagan",
                            source_id=src,
                            seed=derive_seed(seed, "augment", src, j),
                            params=f"z_seed={derive_seed(seed, 'augment', src, j)}",
                        )
                    )
        all_orig = sum(originals.values())
        counted = all_orig if table_arithmetic else originals[target_class]
        formula = (
            f"total = all_originals + {k} * all_inputs"
            if table_arithmetic
            else f"total = target_originals + {k} * all_inputs"
        )
    elif method == "dcgan":
        for i in range(originals[target_class]):
            src = f"{target_class}_{i:06d}"
            for j in range(k):
                records.append(
                    ProvenanceRecord(
                        out_id=f"gen_{target_class}_{src}_{j}",
                        out_class=target_class,
                        method="dcgan",
                        source_id=src,
                        seed=derive_seed(seed, "augment", src, j),
                    )
                )
        counted = originals[target_class]
        formula = f"total = ({k} + 1) * target_originals"
    elif method == "traditional":
        for i in range(originals[target_class]):
            src = f"{target_class}_{i:06d}"
            for j in range(n):
                records.append(
                    ProvenanceRecord(
                        out_id=f"aug_{src}_{j}",
                        out_class=target_class,
                        method="traditional",
                        source_id=src,
                        seed=derive_seed(seed, "augment", src, j),
                        params="rotate/shift/zoom",
                    )
                )
        counted = originals[target_class]
        formula = f"total = ({n} + 1) * target_originals"
    else:
        raise ConfigError(f"unknown augmentation method {method!r}")
    manifest = AugmentManifest(
        method=method,
        target_class=target_class,
        originals=dict(originals),
        counted_originals=counted,
        generated=len(records),
        records=records,
        formula=formula,
        table_arithmetic=table_arithmetic,
    )
    manifest.check()
    return manifest


# ----------------------------------------------------------------------
# geometric transforms (classical augmentation)
# ----------------------------------------------------------------------


def apply_affine(
    image: np.ndarray,
    theta_deg: float,
    dx: float,
    dy: float,
    zoom: float,
    fill: float = -1.0,
) -> np.ndarray:
    """Rotate/zoom about the image center, then shift; bilinear resampling.

    Output pixels whose source falls outside the frame take ``fill``.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = False
    if img.ndim == 3:
        img = img[0]
        squeeze = True
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(theta_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    rows, cols = np.mgrid[0:h, 0:w]
    yo = rows - cy - dy
    xo = cols - cx - dx
    # inverse map: undo rotation, then undo zoom
    xs = (cos_t * xo + sin_t * yo) / zoom + cx
    ys = (-sin_t * xo + cos_t * yo) / zoom + cy

    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    wx = xs - x0
    wy = ys - y0

    out = np.full((h, w), fill)
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    x0c = np.clip(x0, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    interp = (
        img[y0c, x0c] * (1 - wy) * (1 - wx)
        + img[y0c, x1c] * (1 - wy) * wx
        + img[y1c, x0c] * wy * (1 - wx)
        + img[y1c, x1c] * wy * wx
    )
    out[valid] = interp[valid]
    return out[None] if squeeze else out


def sample_transform(rng: np.random.Generator, h: int, w: int) -> tuple[float, float, float, float]:
    """One random (theta, dx, dy, zoom) draw: +-20 deg, +-0.2 shift, 0.8..1.2 zoom."""
    theta = rng.uniform(-20.0, 20.0)
    dx = rng.uniform(-0.2 * w, 0.2 * w)
    dy = rng.uniform(-0.2 * h, 0.2 * h)
    zoom = rng.uniform(0.8, 1.2)
    return theta, dx, dy, zoom


def augment_traditional(image: np.ndarray, n: int = 8, rng: np.random.Generator | None = None):
    """n independently transformed copies plus their parameter strings."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 1:
        raise ContractError(f"expected [1,H,W] image, got shape {image.shape}")
    if image.min() < -1.0 or image.max() > 1.0:
        raise ContractError("image must lie in [-1, 1]")
    rng = rng or np.random.default_rng(0)
    h, w = image.shape[1:]
    outs, params = [], []
    for _ in range(n):
        theta, dx, dy, zoom = sample_transform(rng, h, w)
        outs.append(apply_affine(image, theta, dx, dy, zoom))
        params.append(f"theta={theta:.6f};dx={dx:.6f};dy={dy:.6f};zoom={zoom:.6f}")
    images = np.stack(outs) if outs else np.empty((0, 1, h, w))
    return images, params


# ----------------------------------------------------------------------
# GAN-based generation
# ----------------------------------------------------------------------


def _check_trained(gen: NetworkParams, variant: str) -> None:
    if gen.kind != "generator" or gen.config.variant != variant:
        raise ContractError(f"need a trained {variant} generator, got {gen.kind}/{getattr(gen.config, 'variant', '?')}")


def augment_iagan(
    gen: NetworkParams,
    inputs: dict[str, tuple[list[str], np.ndarray]],
    target_class: str,
    k: int = 3,
    seed: int = 0,
    batch_size: int = 32,
):
    """k conditional generations per input image from every class.

    Returns (ids, images, manifest); every output is labelled with the
    generator's training class.
    """
    _check_trained(gen, "iagan")
    z_dim = gen.config.z_dim
    records: list[ProvenanceRecord] = []
    out_ids: list[str] = []
    cond_list: list[np.ndarray] = []
    z_list: list[np.ndarray] = []
    for cls in sorted(inputs):
        ids, imgs = inputs[cls]
        if len(ids) != imgs.shape[0]:
            raise ContractError(f"class {cls}: {len(ids)} ids vs {imgs.shape[0]} images")
        for i, src in enumerate(ids):
            for j in range(k):
                s = derive_seed(seed, "augment", src, j)
                z_list.append(rng_for(s).standard_normal(z_dim))
                cond_list.append(imgs[i])
                out_id = f"gen_{target_class}_{src}_{j}"
                out_ids.append(out_id)
                records.append(
                    ProvenanceRecord(out_id, target_class, "iagan", src, s, params=f"z_seed={s}")
                )
    images = _generate_batched(gen, z_list, cond_list, batch_size)
    manifest = AugmentManifest(
        method="iagan",
        target_class=target_class,
        originals={cls: len(v[0]) for cls, v in inputs.items()},
        counted_originals=len(inputs.get(target_class, ([], None))[0]),
        generated=len(records),
        records=records,
        formula=f"total = target_originals + {k} * all_inputs",
    )
    manifest.check()
    return out_ids, images, manifest


def augment_dcgan(
    gen: NetworkParams,
    source_ids: list[str],
    target_class: str,
    k: int = 3,
    seed: int = 0,
    batch_size: int = 32,
):
    """k unconditional generations per training image of the target class."""
    _check_trained(gen, "dcgan")
    z_dim = gen.config.z_dim
    records, out_ids, z_list = [], [], []
    for src in source_ids:
        for j in range(k):
            s = derive_seed(seed, "augment", src, j)
            z_list.append(rng_for(s).standard_normal(z_dim))
            out_id = f"gen_{target_class}_{src}_{j}"
            out_ids.append(out_id)
            records.append(ProvenanceRecord(out_id, target_class, "dcgan", src, s, params=f"z_seed={s}"))
    images = _generate_batched(gen, z_list, None, batch_size)
    manifest = AugmentManifest(
        method="dcgan",
        target_class=target_class,
        originals={target_class: len(source_ids)},
        counted_originals=len(source_ids),
        generated=len(records),
        records=records,
        formula=f"total = ({k} + 1) * target_originals",
    )
    manifest.check()
    return out_ids, images, manifest


def _generate_batched(gen, z_list, cond_list, batch_size):
    s = gen.config.image_size
    if not z_list:
        return np.empty((0, 1, s, s))
    out = []
    with T.no_grad():
        for start in range(0, len(z_list), batch_size):
            z = np.stack(z_list[start : start + batch_size])
            cond = np.stack(cond_list[start : start + batch_size]) if cond_list is not None else None
            out.append(generate(gen, z, cond, mode="infer").data)
    return np.concatenate(out, axis=0)


def build_augmented_set(
    originals: dict[str, tuple[list[str], np.ndarray]],
    generated: tuple[list[str], np.ndarray, AugmentManifest],
    target_class: str,
):
    """Combine target-class originals with generated images per the manifest.

    Returns (ids, images, manifest); the manifest's integrity recount runs
    first and raises on any disagreement.
    """
    gen_ids, gen_images, manifest = generated
    manifest.check()
    if manifest.target_class != target_class:
        raise IntegrityError(
            f"manifest targets class {manifest.target_class!r}, requested {target_class!r}"
        )
    base_ids, base_images = originals[target_class]
    if manifest.table_arithmetic:
        ids = list(base_ids)
        images = [base_images]
        for cls in sorted(originals):
            if cls == target_class:
                continue
            ids.extend(originals[cls][0])
            images.append(originals[cls][1])
        ids.extend(gen_ids)
        images.append(gen_images)
    else:
        ids = list(base_ids) + list(gen_ids)
        images = [base_images, gen_images]
    combined = np.concatenate(images, axis=0)
    if combined.shape[0] != manifest.total:
        raise IntegrityError(
            f"combined set has {combined.shape[0]} images, manifest total is {manifest.total}"
        )
    return ids, combined, manifest
