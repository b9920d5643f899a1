"""Adversarial training loop.

One step = one discriminator update on a real batch (label 1) and a fake
batch (label 0) via binary cross-entropy, then one generator update.  The
dual-input generator receives the same real batch on its encoder branch
that the discriminator sees as its real batch.  The generator objective is
non-saturating by default (maximize log D(G(z))); the strict minimax form
(minimize log(1 - D(G(z)))) is available per config.

Losses are computed directly from the reported sigmoid probabilities, so
every logged loss re-derives exactly from the step's recorded outputs.  A
probability that rounds to exactly 0 or 1 makes the cross-entropy leave its
domain; the step is then aborted with a diagnostic instead of producing a
non-finite loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DomainError, NumericError, TrainingAborted
from .models import DiscriminatorConfig, GeneratorConfig, NetworkParams, discriminate, generate, init_discriminator, init_generator
from .seeds import rng_for
from .tensor import AdamState, Tensor


@dataclass
class TrainConfig:
    lr_d: float = 4e-4
    lr_g: float = 1e-4
    batch_size: int = 32
    epochs: int = 250
    z_dim: int = 120
    seed: int = 0
    generator_loss: str = "non_saturating"  # or "minimax"
    encoder_input: str = "real"  # or "random" (ablation)
    label_smoothing: float = 0.0  # optional 0.9-style smoothing, off by default

    def __post_init__(self):
        if self.lr_d <= 0 or self.lr_g <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch size must be >= 2 (batchnorm)")
        if self.generator_loss not in ("non_saturating", "minimax"):
            raise ConfigError(f"generator_loss {self.generator_loss!r} unknown")
        if self.encoder_input not in ("real", "random"):
            raise ConfigError(f"encoder_input {self.encoder_input!r} unknown")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must be in [0, 1)")


@dataclass
class StepResult:
    d_loss: float
    g_loss: float
    d_real: np.ndarray  # per-sample D outputs on the real batch
    d_fake: np.ndarray  # per-sample D outputs on the fake batch (D step)


@dataclass
class TrainLog:
    records: list[tuple[int, int, float, float, float, float]] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, step: int, epoch: int, res: StepResult) -> None:
        self.records.append(
            (step, epoch, res.d_loss, res.g_loss, float(res.d_real.mean()), float(res.d_fake.mean()))
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "epoch", "d_loss", "g_loss", "d_real_mean", "d_fake_mean"])
            for row in self.records:
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4]), repr(row[5])])


def bce_real_fake(d_real: np.ndarray, d_fake: np.ndarray, smoothing: float = 0.0) -> float:
    """Reference BCE formula; mirrors the training graph op for op, so a
    logged d_loss re-derives bit-exactly from the logged D outputs."""

    def mean_log(p: np.ndarray) -> float:
        return float(np.log(p).sum() * (1.0 / p.size))

    if smoothing == 0.0:
        real_term = -mean_log(d_real)
    else:
        target = 1.0 - smoothing
        real_term = (-mean_log(d_real)) * target + (-mean_log(1.0 - d_real)) * (1.0 - target)
    fake_term = -mean_log(1.0 - d_fake)
    return real_term + fake_term


def _mean_log(p: Tensor) -> Tensor:
    n = p.size
    return T.scale(T.reduce_sum(T.log(p)), 1.0 / n)


def gan_train_step(
    gen: NetworkParams,
    disc: NetworkParams,
    real_batch: np.ndarray,
    rng: np.random.Generator,
    cfg: TrainConfig,
    g_state: AdamState,
    d_state: AdamState,
    update_generator: bool = True,
) -> StepResult:
    """One discriminator update followed by one generator update."""
    real_batch = np.asarray(real_batch, dtype=np.float64)
    if real_batch.shape[0] != cfg.batch_size:
        raise ContractError(f"real batch size {real_batch.shape[0]} != configured {cfg.batch_size}")
    if real_batch.min() < -1.0 or real_batch.max() > 1.0:
        raise ContractError("real batch must lie in [-1, 1]")
    n = cfg.batch_size
    z = Tensor(rng.standard_normal((n, cfg.z_dim)))
    gen_cfg: GeneratorConfig = gen.config
    cond = None
    if gen_cfg.variant == "iagan":
        if cfg.encoder_input == "real":
            cond = Tensor(real_batch)
        else:
            cond = Tensor(rng.uniform(-1.0, 1.0, size=real_batch.shape))

    try:
        fake = generate(gen, z, cond, mode="train")

        # --- discriminator update: real as 1 (minus smoothing), fake as 0
        p_real, _ = discriminate(disc, Tensor(real_batch), mode="train")
        p_fake_d, _ = discriminate(disc, fake.detach(), mode="train")
        if cfg.label_smoothing == 0.0:
            real_term = T.neg(_mean_log(p_real))
        else:
            target = 1.0 - cfg.label_smoothing
            one_minus_real = T.neg(T.sub(p_real, 1.0))
            real_term = T.add(
                T.scale(T.neg(_mean_log(p_real)), target),
                T.scale(T.neg(_mean_log(one_minus_real)), 1.0 - target),
            )
        fake_term = T.neg(_mean_log(T.neg(T.sub(p_fake_d, 1.0))))  # -mean log(1 - p)
        d_loss = T.add(real_term, fake_term)
        d_loss.backward()
        T.adam_step(disc.params, disc.grads(), d_state, cfg.lr_d)
        disc.zero_grad()
        gen.zero_grad()

        # --- generator update against the refreshed discriminator
        g_loss_val = float("nan")
        if update_generator:
            p_fake_g, _ = discriminate(disc, fake, mode="train")
            if cfg.generator_loss == "non_saturating":
                g_loss = T.neg(_mean_log(p_fake_g))
            else:
                g_loss = _mean_log(T.neg(T.sub(p_fake_g, 1.0)))  # mean log(1 - p)
            g_loss.backward()
            T.adam_step(gen.params, gen.grads(), g_state, cfg.lr_g)
            g_loss_val = g_loss.item()
        gen.zero_grad()
        disc.zero_grad()
    except (DomainError, NumericError) as exc:
        gen.zero_grad()
        disc.zero_grad()
        raise TrainingAborted(
            f"training step aborted: {exc}",
            diagnostics={"adam_step_d": d_state.step, "adam_step_g": g_state.step},
        ) from exc

    return StepResult(
        d_loss=d_loss.item(),
        g_loss=g_loss_val,
        d_real=p_real.data.reshape(-1).copy(),
        d_fake=p_fake_d.data.reshape(-1).copy(),
    )


def train(
    images: np.ndarray,
    gen_cfg: GeneratorConfig,
    cfg: TrainConfig,
    out_dir=None,
    disc_cfg: DiscriminatorConfig | None = None,
    sample_hook=None,
) -> tuple[NetworkParams, NetworkParams, TrainLog]:
    """Train a generator/discriminator pair on one class of images.

    Epochs shuffle with seeded order; a checkpoint is written at each epoch
    end when ``out_dir`` is given.  ``sample_hook(step, epoch, gen, disc)``
    runs after every step, for sample grids.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ConfigError(f"dataset must be a non-empty [N,1,S,S] array, got shape {images.shape}")
    if images.shape[0] < cfg.batch_size:
        raise ConfigError(
            f"dataset of {images.shape[0]} images cannot fill one batch of {cfg.batch_size}"
        )
    if gen_cfg.z_dim != cfg.z_dim:
        raise ConfigError("z_dim differs between generator and train configs")
    if disc_cfg is None:
        disc_cfg = DiscriminatorConfig(
            image_size=gen_cfg.image_size, base_channels=gen_cfg.base_channels, seed=gen_cfg.seed
        )
    gen = init_generator(gen_cfg)
    disc = init_discriminator(disc_cfg)
    g_state = AdamState()
    d_state = AdamState()
    log = TrainLog(meta={"encoder_input": cfg.encoder_input, "generator_loss": cfg.generator_loss})

    steps_per_epoch = images.shape[0] // cfg.batch_size
    step = 0
    out_dir = Path(out_dir) if out_dir is not None else None
    for epoch in range(1, cfg.epochs + 1):
        order = rng_for(cfg.seed, "train", "shuffle", epoch).permutation(images.shape[0])
        for b in range(steps_per_epoch):
            batch = images[order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            rng = rng_for(cfg.seed, "train", "step", step)
            res = gan_train_step(gen, disc, batch, rng, cfg, g_state, d_state)
            log.append(step, epoch, res)
            step += 1
            if sample_hook is not None:
                sample_hook(step, epoch, gen, disc)
        if out_dir is not None:
            ck = out_dir / f"epoch_{epoch:04d}"
            gen.save(ck / "generator")
            disc.save(ck / "discriminator")
            log.checkpoints.append(str(ck))
    if out_dir is not None:
        gen.save(out_dir / "final" / "generator")
        disc.save(out_dir / "final" / "discriminator")
        log.to_csv(out_dir / "train_log.csv")
        _write_train_meta(out_dir, gen_cfg, cfg)
    return gen, disc, log


def _write_train_meta(out_dir: Path, gen_cfg: GeneratorConfig, cfg: TrainConfig) -> None:
    lines = []
    for obj in (gen_cfg, cfg):
        for k, v in sorted(vars(obj).items()):
            lines.append(f"{k} = {v}")
    (out_dir / "train_config.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
