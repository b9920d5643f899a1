"""Anomaly scoring by latent-space inversion.

Given a trained generator/discriminator pair and a test image x, gradient
descent over the latent z (weights frozen) minimizes

    loss(z) = (1 - lambda) * sum|x - G(z)|  +  lambda * sum|f(x) - f(G(z))|

where f is the discriminator's tap-layer feature map.  The anomaly score
A(x) is the same convex combination evaluated at the returned z; with
``track_best`` (default) that is the best z seen during the search, so the
best-loss trajectory is monotone non-increasing by construction.

For dual-input generators the conditioning branch receives the test image
itself during search (it is available at inference time); this choice is
recorded on every result.  ``dual_anomaly_score`` sums the scores from two
independently searched models, so an image alien to both training classes
scores high under both.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError, NumericError, TrainingAborted
from .models import NetworkParams, discriminate, generate
from .seeds import derive_seed, rng_for
from .tensor import AdamState, Tensor


@dataclass
class SearchConfig:
    iterations: int = 800
    lam: float = 0.2
    seed: int = 0
    step_size: float = 0.01
    optimizer: str = "adam"  # or "gradient_descent"
    track_best: bool = True
    restarts: int = 1
    conditioning: str = "test_image"  # or "noise" (dual-input generators only)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must lie in [0, 1]")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.optimizer not in ("adam", "gradient_descent"):
            raise ConfigError(f"optimizer {self.optimizer!r} unknown")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.conditioning not in ("test_image", "noise"):
            raise ConfigError(f"conditioning {self.conditioning!r} unknown")


@dataclass
class AnomalyResult:
    image_id: str
    score: float
    residual: float
    discrimination: float
    z: np.ndarray
    trajectory: list[float]
    iterations: int
    seed: int
    lam: float
    conditioning: str = "none"

    def recompose(self) -> float:
        """Recompute the score from the stored pieces; must be bit-exact."""
        return (1.0 - self.lam) * self.residual + self.lam * self.discrimination


def _as_image(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[0] != 1 or x.shape[1] != 1:
        raise DimensionError(f"expected one [1,H,W] or [1,1,H,W] image, got shape {x.shape}")
    return x


def residual_loss(x, gx) -> float:
    """Sum of absolute pixel differences."""
    x = np.asarray(x, dtype=np.float64)
    gx = np.asarray(gx, dtype=np.float64)
    if x.shape != gx.shape:
        raise DimensionError(f"residual_loss: shapes {x.shape} and {gx.shape} differ")
    return float(np.abs(x - gx).sum())


def discrimination_loss(x, gx, disc: NetworkParams) -> float:
    """Sum of absolute differences between tap-layer features of x and gx."""
    with T.no_grad():
        _, fx = discriminate(disc, _as_image(x), mode="infer")
        _, fg = discriminate(disc, _as_image(gx), mode="infer")
    return float(np.abs(fx.data - fg.data).sum())


def mapping_loss(x, z, gen: NetworkParams, disc: NetworkParams, lam: float, conditioning: str = "test_image") -> float:
    """(1 - lam) * residual + lam * discrimination at the given latent."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError("lambda must lie in [0, 1]")
    x = _as_image(x)
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    cond = _condition_for(gen, x, conditioning, seed=0)
    with T.no_grad():
        gx = generate(gen, z, cond, mode="infer").data
    return (1.0 - lam) * residual_loss(x, gx) + lam * discrimination_loss(x, gx, disc)


def _condition_for(gen: NetworkParams, x: np.ndarray, conditioning: str, seed: int):
    if gen.config.variant != "iagan":
        return None
    if conditioning == "test_image":
        return x
    rng = rng_for(seed, "conditioning_noise")
    return rng.uniform(-1.0, 1.0, size=x.shape)


def latent_search(x, gen: NetworkParams, disc: NetworkParams, cfg: SearchConfig, z0=None, image_id: str = "") -> AnomalyResult:
    """Search the latent space for the point whose generation matches x.

    Only z receives gradient updates; generator and discriminator weights
    are frozen.  The per-iteration mapping loss is recorded; with
    ``track_best`` the returned z is the best evaluated one.
    """
    x = _as_image(x)
    gen_f = gen.detached()
    disc_f = disc.detached()
    z_dim = gen.config.z_dim
    seed = derive_seed(cfg.seed, "anogan", image_id) if image_id else cfg.seed
    if z0 is not None:
        z_data = np.asarray(z0, dtype=np.float64).reshape(1, z_dim).copy()
    else:
        z_data = rng_for(seed, "z_init").standard_normal((1, z_dim))

    with T.no_grad():
        _, fx_t = discriminate(disc_f, x, mode="infer")
    fx = Tensor(fx_t.data)
    x_const = Tensor(x)
    cond = _condition_for(gen_f, x, cfg.conditioning, seed)

    z = Tensor(z_data, requires_grad=True)
    state = AdamState()
    w_r, w_d = 1.0 - cfg.lam, cfg.lam

    trajectory: list[float] = []
    best = None  # (loss, residual, discrimination, z copy)
    last = None
    try:
        for it in range(cfg.iterations):
            gx = generate(gen_f, z, cond, mode="infer")
            l_r = T.reduce_sum(T.abs_(T.sub(x_const, gx)))
            _, fg = discriminate(disc_f, gx, mode="infer")
            l_d = T.reduce_sum(T.abs_(T.sub(fx, fg)))
            loss = T.add(T.scale(l_r, w_r), T.scale(l_d, w_d))
            lv, rv, dv = loss.item(), l_r.item(), l_d.item()
            trajectory.append(lv)
            last = (lv, rv, dv, z.data.copy())
            if best is None or lv < best[0]:
                best = (lv, rv, dv, z.data.copy())
            loss.backward()
            if cfg.optimizer == "adam":
                T.adam_step({"z": z}, {"z": z.grad}, state, cfg.step_size)
            else:
                if not np.all(np.isfinite(z.grad)):
                    raise NumericError("non-finite latent gradient")
                z.data -= cfg.step_size * z.grad
            z.zero_grad()
    except (NumericError,) as exc:
        raise TrainingAborted(
            f"latent search aborted: {exc}",
            diagnostics={"image_id": image_id, "trajectory": trajectory},
        ) from exc

    chosen = best if cfg.track_best else last
    lv, rv, dv, z_best = chosen
    score = w_r * rv + w_d * dv
    return AnomalyResult(
        image_id=image_id,
        score=score,
        residual=rv,
        discrimination=dv,
        z=z_best,
        trajectory=trajectory,
        iterations=cfg.iterations,
        seed=seed,
        lam=cfg.lam,
        conditioning=cfg.conditioning if gen.config.variant == "iagan" else "none",
    )


def anomaly_score(x, gen, disc, cfg: SearchConfig, image_id: str = "") -> float:
    """Scalar score; with restarts > 1, the mean of the restarts' best scores."""
    if cfg.restarts == 1:
        return latent_search(x, gen, disc, cfg, image_id=image_id).score
    scores = []
    for r in range(cfg.restarts):
        sub = SearchConfig(
            iterations=cfg.iterations, lam=cfg.lam, seed=derive_seed(cfg.seed, "restart", r),
            step_size=cfg.step_size, optimizer=cfg.optimizer, track_best=cfg.track_best,
            restarts=1, conditioning=cfg.conditioning,
        )
        scores.append(latent_search(x, gen, disc, sub, image_id=image_id).score)
    return float(np.mean(scores))


def dual_anomaly_score(x, model_a, model_b, cfg: SearchConfig, image_id: str = "") -> float:
    """Sum of two anomaly scores from independently seeded searches."""
    total = 0.0
    for tag, (gen, disc) in (("model_a", model_a), ("model_b", model_b)):
        sub = SearchConfig(
            iterations=cfg.iterations, lam=cfg.lam, seed=derive_seed(cfg.seed, tag),
            step_size=cfg.step_size, optimizer=cfg.optimizer, track_best=cfg.track_best,
            restarts=cfg.restarts, conditioning=cfg.conditioning,
        )
        total += anomaly_score(x, gen, disc, sub, image_id=image_id)
    return total


# ----------------------------------------------------------------------
# batched scoring (one optimization per image, vectorized across a batch)
# ----------------------------------------------------------------------


def score_images(
    images: np.ndarray,
    ids: list[str],
    gen: NetworkParams,
    disc: NetworkParams,
    cfg: SearchConfig,
    batch_size: int = 25,
) -> list[AnomalyResult]:
    """Latent search for many images, vectorized in fixed-size batches.

    Each image keeps its own latent, loss bookkeeping, and derived init
    seed; Adam on the stacked latents is elementwise, so per-image updates
    match the single-image code path.  Results are deterministic given
    (weights, images, seed, batch grouping).
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] != len(ids):
        raise ContractError(f"need [N,1,H,W] images matching {len(ids)} ids, got {images.shape}")
    results: list[AnomalyResult] = []
    for start in range(0, len(ids), batch_size):
        chunk = images[start : start + batch_size]
        chunk_ids = ids[start : start + batch_size]
        results.extend(_search_batch(chunk, chunk_ids, gen, disc, cfg))
    return results


def _search_batch(images, ids, gen, disc, cfg: SearchConfig) -> list[AnomalyResult]:
    n = images.shape[0]
    gen_f = gen.detached()
    disc_f = disc.detached()
    z_dim = gen.config.z_dim
    seeds = [derive_seed(cfg.seed, "anogan", i) for i in ids]
    z_data = np.stack([rng_for(s, "z_init").standard_normal(z_dim) for s in seeds])

    with T.no_grad():
        _, fx_t = discriminate(disc_f, images, mode="infer")
    fx = Tensor(fx_t.data)
    x_const = Tensor(images)
    cond = images if gen_f.config.variant == "iagan" and cfg.conditioning == "test_image" else None
    if gen_f.config.variant == "iagan" and cfg.conditioning == "noise":
        cond = np.stack([rng_for(s, "conditioning_noise").uniform(-1.0, 1.0, size=images.shape[1:]) for s in seeds])

    z = Tensor(z_data, requires_grad=True)
    state = AdamState()
    w_r, w_d = 1.0 - cfg.lam, cfg.lam

    traj = np.empty((cfg.iterations, n))
    best_loss = np.full(n, np.inf)
    best_r = np.zeros(n)
    best_d = np.zeros(n)
    best_z = z_data.copy()
    last_r = np.zeros(n)
    last_d = np.zeros(n)

    for it in range(cfg.iterations):
        gx = generate(gen_f, z, cond, mode="infer")
        r_per = T.reduce_sum(T.abs_(T.sub(x_const, gx)), axes={1, 2, 3})
        _, fg = discriminate(disc_f, gx, mode="infer")
        d_per = T.reduce_sum(T.abs_(T.sub(fx, fg)), axes={1})
        loss_per = T.add(T.scale(r_per, w_r), T.scale(d_per, w_d))
        total = T.reduce_sum(loss_per)
        lv = loss_per.data
        traj[it] = lv
        last_r[:] = r_per.data
        last_d[:] = d_per.data
        improved = lv < best_loss
        best_loss[improved] = lv[improved]
        best_r[improved] = r_per.data[improved]
        best_d[improved] = d_per.data[improved]
        best_z[improved] = z.data[improved]
        total.backward()
        if cfg.optimizer == "adam":
            T.adam_step({"z": z}, {"z": z.grad}, state, cfg.step_size)
        else:
            z.data -= cfg.step_size * z.grad
        z.zero_grad()

    results = []
    for i, image_id in enumerate(ids):
        if cfg.track_best:
            rv, dv, zv = float(best_r[i]), float(best_d[i]), best_z[i]
        else:
            rv, dv, zv = float(last_r[i]), float(last_d[i]), z.data[i]
        results.append(
            AnomalyResult(
                image_id=image_id,
                score=w_r * rv + w_d * dv,
                residual=rv,
                discrimination=dv,
                z=zv.copy(),
                trajectory=[float(v) for v in traj[:, i]],
                iterations=cfg.iterations,
                seed=seeds[i],
                lam=cfg.lam,
                conditioning=cfg.conditioning if gen.config.variant == "iagan" else "none",
            )
        )
    return results


def write_scores_csv(path, results: list[AnomalyResult], labels: dict[str, str]) -> None:
    """Score report: image_id,true_label,score,residual,discrimination,iterations,seed."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "true_label", "score", "residual", "discrimination", "iterations", "seed"])
        for r in results:
            w.writerow(
                [r.image_id, labels.get(r.image_id, ""), repr(float(r.score)), repr(float(r.residual)),
                 repr(float(r.discrimination)), r.iterations, r.seed]
            )


def read_scores_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "image_id": row["image_id"],
                    "true_label": row["true_label"],
                    "score": float(row["score"]),
                    "residual": float(row["residual"]),
                    "discrimination": float(row["discrimination"]),
                }
            )
    return rows
