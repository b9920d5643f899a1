"""Command-line front end.

Subcommands: synth, train, augment, score, eval, ablate-random-input,
pipeline.  Every run resolves its configuration (an optional ``key = value``
file overridden by flags), freezes the resolved copy next to its outputs,
and drops an INCOMPLETE marker that is removed only when all outputs were
written and integrity checks passed.
"""

from __future__ import annotations

import os

# single-threaded BLAS when the CLI owns the process: keeps checkpoint and
# metrics bytes reproducible run to run (no effect if numpy is already up)
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import argparse
import sys
from pathlib import Path

import numpy as np

from . import anogan as AG
from . import augment as AU
from . import data as D
from . import metrics as MX
from . import models as M
from . import training as TR
from .errors import GanlabError
from .seeds import derive_seed, rng_for


def _read_cfg_file(path) -> dict[str, str]:
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise GanlabError(f"{path}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _resolve(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """File values override defaults; explicit flags override the file."""
    merged = dict(parser_defaults)
    file_vals = _read_cfg_file(args.config) if getattr(args, "config", None) else {}
    for k, v in file_vals.items():
        if k in merged and merged[k] is not None:
            merged[k] = type(parser_defaults[k])(v) if parser_defaults[k] is not None else v
        else:
            merged[k] = v
    for k, v in vars(args).items():
        if k in ("config", "func"):
            continue
        if v is not None and (k not in merged or v != parser_defaults.get(k)):
            merged[k] = v
        elif k not in merged:
            merged[k] = v
    return merged


def _freeze_config(out_dir: Path, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v}" for k, v in sorted(resolved.items()) if k != "func"]
    (out_dir / "run.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")


class _RunDir:
    """INCOMPLETE marker lifecycle for one output directory."""

    def __init__(self, out_dir):
        self.path = Path(out_dir)
        self.path.mkdir(parents=True, exist_ok=True)
        self.marker = self.path / "INCOMPLETE"
        self.marker.write_text("run in progress\n", encoding="utf-8")

    def done(self):
        if self.marker.exists():
            self.marker.unlink()


# ----------------------------------------------------------------------
# synth
# ----------------------------------------------------------------------


def cmd_synth(res: dict) -> int:
    out = Path(res["out"])
    run = _RunDir(out)
    _freeze_config(out, res)
    classes = [c for c in str(res["classes"]).split(",") if c]
    per_class = int(res["per_class"])
    size = int(res["size"])
    seed = int(res["seed"])
    geometry = D.PhantomGeometry()
    D.write_phantom_geometry(out / "phantom.cfg", geometry)
    if per_class == 0:
        print("warning: per-class count is 0, dataset is empty", file=sys.stderr)
        data = {}
    else:
        data = D.make_phantom_dataset(classes, per_class, size, seed, geometry)
        D.write_dataset(out, data)
    listing = {cls: ids for cls, (ids, _) in data.items()}
    test_per_class = int(res["test_per_class"])
    if data:
        train_classes = str(res["train_classes"]).split(",") if res.get("train_classes") else None
        split = D.make_split(listing, test_per_class, seed, train_classes)
        split.save(out / "split.csv")
    run.done()
    return 0


# ----------------------------------------------------------------------
# train
# ----------------------------------------------------------------------


def _load_split_images(data_dir: Path, size: int | None = None):
    dataset = D.load_dataset(data_dir, size=size)
    split = D.SplitManifest.load(data_dir / "split.csv")
    return dataset, split


def _images_for(dataset, split, cls: str, roles: tuple[str, ...]) -> np.ndarray:
    ids, imgs = dataset[cls]
    index = {i: k for k, i in enumerate(ids)}
    keep = [index[i] for role in roles for i in split.ids(cls, role)]
    return imgs[sorted(keep)]


def _train_once(res: dict, out: Path, variant: str, encoder_input: str, images: np.ndarray, sample_hook=None):
    gen_cfg = M.GeneratorConfig(
        image_size=int(res["size"]),
        z_dim=int(res["z_dim"]),
        base_channels=int(res["base_channels"]),
        variant=variant,
        seed=int(res["seed"]),
    )
    cfg = TR.TrainConfig(
        lr_d=float(res["lr_d"]),
        lr_g=float(res["lr_g"]),
        batch_size=int(res["batch_size"]),
        epochs=int(res["epochs"]),
        z_dim=int(res["z_dim"]),
        seed=int(res["seed"]),
        generator_loss=str(res["generator_loss"]),
        encoder_input=encoder_input,
    )
    return TR.train(images, gen_cfg, cfg, out_dir=out, sample_hook=sample_hook)


def _make_sample_hook(out: Path, res: dict, images: np.ndarray, every: int, grid_epochs=()):
    (out / "samples").mkdir(parents=True, exist_ok=True)
    n = 16
    z_eval = rng_for(int(res["seed"]), "samples", "z").standard_normal((n, int(res["z_dim"])))
    cond_idx = rng_for(int(res["seed"]), "samples", "cond").integers(0, images.shape[0], size=n)
    cond_eval = images[cond_idx]
    grid_at = set(int(e) for e in grid_epochs)
    seen_epochs = set()

    def hook(step, epoch, gen, disc):
        want_step = every > 0 and step % every == 0
        want_epoch = epoch in grid_at and epoch not in seen_epochs
        if not (want_step or want_epoch):
            return
        from . import tensor as T

        cond = cond_eval if gen.config.variant == "iagan" else None
        with T.no_grad():
            samples = M.generate(gen, z_eval, cond, mode="infer").data
        if want_step:
            D.save_grid(samples, out / "samples" / f"step_{step:06d}.pgm")
        if want_epoch:
            seen_epochs.add(epoch)
            D.save_grid(samples, out / "samples" / f"epoch_{epoch:04d}.pgm")

    return hook


def cmd_train(res: dict) -> int:
    out = Path(res["out"])
    run = _RunDir(out)
    _freeze_config(out, res)
    dataset, split = _load_split_images(Path(res["data"]), size=int(res["size"]))
    cls = res["target_class"]
    images = _images_for(dataset, split, cls, ("train",))
    hook = _make_sample_hook(out, res, images, int(res["sample_every"]))
    _train_once(res, out, res["variant"], res["encoder_input"], images, hook)
    run.done()
    return 0


# ----------------------------------------------------------------------
# augment
# ----------------------------------------------------------------------


def cmd_augment(res: dict) -> int:
    out = Path(res["out"])
    run = _RunDir(out)
    _freeze_config(out, res)
    data_dir = Path(res["data"])
    dataset, split = _load_split_images(data_dir, size=int(res["size"]))
    cls = res["target_class"]
    method = res["method"]
    k = int(res["k"])
    seed = int(res["seed"])
    table = bool(res["table_arithmetic"])

    train_ids = split.ids(cls, "train")
    originals = {
        c: (split.ids(c, "train") + split.ids(c, "pool"), None) for c in dataset
    }
    # materialize the image arrays per class, training+pool roles only
    originals_imgs = {}
    for c in dataset:
        ids_all, imgs = dataset[c]
        index = {i: j for j, i in enumerate(ids_all)}
        wanted = originals[c][0]
        originals_imgs[c] = (wanted, imgs[[index[i] for i in wanted]])

    if method == "traditional":
        n = int(res["n"])
        gen_ids, gen_imgs, records = [], [], []
        src_ids, src_imgs = originals_imgs[cls]
        src_train = [i for i in src_ids if i in set(train_ids)]
        index = {i: j for j, i in enumerate(src_ids)}
        for src in src_train:
            rng = rng_for(seed, "augment", src)
            outs, params = AU.augment_traditional(src_imgs[index[src]], n=n, rng=rng)
            for j in range(n):
                out_id = f"aug_{src}_{j}"
                gen_ids.append(out_id)
                gen_imgs.append(outs[j])
                records.append(AU.ProvenanceRecord(out_id, cls, "traditional", src, derive_seed(seed, "augment", src), params[j]))
        gen_imgs = np.stack(gen_imgs) if gen_imgs else np.empty((0, 1, int(res["size"]), int(res["size"])))
        manifest = AU.AugmentManifest(
            method="traditional", target_class=cls, originals={cls: len(src_train)},
            counted_originals=len(src_train), generated=len(records), records=records,
            formula=f"total = ({n} + 1) * target_originals",
        )
        manifest.check()
    elif method in ("iagan", "dcgan"):
        gen_net = M.NetworkParams.load(Path(res["model"]))
        if method == "iagan":
            inputs = {c: (ids, imgs) for c, (ids, imgs) in originals_imgs.items()}
            gen_ids, gen_imgs, manifest = AU.augment_iagan(gen_net, inputs, cls, k=k, seed=seed)
            manifest.table_arithmetic = table
            if table:
                manifest.counted_originals = sum(len(v[0]) for v in inputs.values())
                manifest.formula = f"total = all_originals + {k} * all_inputs"
            manifest.check()
        else:
            src_train = split.ids(cls, "train")
            gen_ids, gen_imgs, manifest = AU.augment_dcgan(gen_net, src_train, cls, k=k, seed=seed)
    else:
        raise GanlabError(f"unknown augmentation method {method!r}")

    gen_dir = out / "generated" / cls
    gen_dir.mkdir(parents=True, exist_ok=True)
    for i, gid in enumerate(gen_ids):
        D.save_image(gen_imgs[i], gen_dir / f"{gid}.pgm")
    manifest.save(out / "manifest.csv")
    summary = [
        f"method = {method}",
        f"target_class = {cls}",
        f"counted_originals = {manifest.counted_originals}",
        f"generated = {manifest.generated}",
        f"total = {manifest.total}",
        f"formula = {manifest.formula}",
    ]
    (out / "counts.cfg").write_text("\n".join(summary) + "\n", encoding="utf-8")
    run.done()
    return 0


# ----------------------------------------------------------------------
# score
# ----------------------------------------------------------------------


def _load_model_pair(ck_dir: Path):
    gen = M.NetworkParams.load(ck_dir / "generator")
    disc = M.NetworkParams.load(ck_dir / "discriminator")
    return gen, disc


def cmd_score(res: dict) -> int:
    out_file = Path(res["out"])
    run = _RunDir(out_file.parent)
    dataset, split = _load_split_images(Path(res["data"]), size=int(res["size"]))
    model_dirs = [Path(p) for p in str(res["models"]).split(",") if p]
    pairs = [_load_model_pair(p) for p in model_dirs]
    cfg = AG.SearchConfig(
        iterations=int(res["iterations"]),
        lam=float(res["lam"]),
        seed=int(res["seed"]),
        step_size=float(res["step_size"]),
        optimizer=str(res["optimizer"]),
    )
    role = str(res["split"])
    ids, images, labels = [], [], {}
    for cls in sorted(dataset):
        cls_ids = split.ids(cls, role)
        all_ids, imgs = dataset[cls]
        index = {i: j for j, i in enumerate(all_ids)}
        for i in cls_ids:
            ids.append(i)
            images.append(imgs[index[i]])
            labels[i] = cls
    images = np.stack(images) if ids else np.empty((0, 1, int(res["size"]), int(res["size"])))

    batch = int(res["batch_size"])
    if len(pairs) == 1:
        gen, disc = pairs[0]
        results = AG.score_images(images, ids, gen, disc, cfg, batch_size=batch)
    else:
        # dual scoring: sum of per-model scores from independently seeded searches
        per_model = []
        for tag, (gen, disc) in zip(("model_a", "model_b"), pairs):
            sub = AG.SearchConfig(
                iterations=cfg.iterations, lam=cfg.lam, seed=derive_seed(cfg.seed, tag),
                step_size=cfg.step_size, optimizer=cfg.optimizer,
            )
            per_model.append(AG.score_images(images, ids, gen, disc, sub, batch_size=batch))
        results = []
        for ra, rb in zip(*per_model):
            results.append(
                AG.AnomalyResult(
                    image_id=ra.image_id,
                    score=ra.score + rb.score,
                    residual=ra.residual + rb.residual,
                    discrimination=ra.discrimination + rb.discrimination,
                    z=np.concatenate([ra.z, rb.z]),
                    trajectory=[],
                    iterations=cfg.iterations,
                    seed=cfg.seed,
                    lam=cfg.lam,
                )
            )
    AG.write_scores_csv(out_file, results, labels)
    _freeze_config(out_file.parent, res)
    run.done()
    return 0


# ----------------------------------------------------------------------
# eval
# ----------------------------------------------------------------------


def _binary_labels(rows: list[dict], positive_class: str | None):
    labels = []
    for r in rows:
        lab = r["true_label"]
        if positive_class is not None:
            labels.append(1 if lab == positive_class else 0)
        else:
            labels.append(int(lab))
    return np.array(labels)


def cmd_eval(res: dict) -> int:
    out_file = Path(res["out"])
    run = _RunDir(out_file.parent)
    rows = AG.read_scores_csv(Path(res["scores"]))
    positive = res.get("positive_class")
    labels = _binary_labels(rows, positive)
    scores = np.array([r["score"] for r in rows])
    auc_val = MX.auc(scores, labels)
    op = MX.operating_point(scores, labels, float(res["min_sens"]), float(res["min_spec"]))
    p_vs_baseline = None
    if res.get("baseline"):
        base_rows = AG.read_scores_csv(Path(res["baseline"]))
        base_by_id = {r["image_id"]: r["score"] for r in base_rows}
        paired = [r for r in rows if r["image_id"] in base_by_id]
        if len(paired) != len(rows):
            print(
                f"warning: baseline covers {len(paired)}/{len(rows)} cases; using the paired subset",
                file=sys.stderr,
            )
        p_scores = np.array([r["score"] for r in paired])
        b_scores = np.array([base_by_id[r["image_id"]] for r in paired])
        p_labels = _binary_labels(paired, positive)
        p_vs_baseline = MX.delong_test(p_scores, b_scores, p_labels).p_value
    MX.write_metrics_csv(
        out_file,
        [
            {
                "experiment": res.get("experiment") or Path(res["scores"]).stem,
                "auc": auc_val,
                "p_vs_baseline": p_vs_baseline,
                "sens": op.sensitivity,
                "spec": op.specificity,
                "acc": op.accuracy,
                "threshold": op.threshold,
            }
        ],
    )
    run.done()
    return 0


# ----------------------------------------------------------------------
# ablate-random-input
# ----------------------------------------------------------------------


def nearest_training_residual(samples: np.ndarray, train_images: np.ndarray) -> float:
    """Mean over samples of the min per-pixel L1 distance to any training image."""
    vals = []
    for s in samples:
        diffs = np.abs(train_images - s[None]).mean(axis=(1, 2, 3))
        vals.append(float(diffs.min()))
    return float(np.mean(vals))


def cmd_ablate(res: dict) -> int:
    out = Path(res["out"])
    run = _RunDir(out)
    _freeze_config(out, res)
    dataset, split = _load_split_images(Path(res["data"]), size=int(res["size"]))
    cls = res["target_class"]
    images = _images_for(dataset, split, cls, ("train",))
    grid_epochs = [int(e) for e in str(res["grid_epochs"]).split(",") if e]
    grid_epochs = [e for e in grid_epochs if e <= int(res["epochs"])] + [int(res["epochs"])]

    runs = {}
    for tag, encoder_input in (("real", "real"), ("random", "random")):
        sub = out / tag
        hook = _make_sample_hook(sub, res, images, every=int(res["sample_every"]), grid_epochs=grid_epochs)
        gen, disc, log = _train_once(res, sub, "iagan", encoder_input, images, hook)
        n = 16
        z = rng_for(int(res["seed"]), "ablate", "z").standard_normal((n, int(res["z_dim"])))
        if encoder_input == "real":
            idx = rng_for(int(res["seed"]), "ablate", "cond").integers(0, images.shape[0], size=n)
            cond = images[idx]
        else:
            cond = rng_for(int(res["seed"]), "ablate", "noise").uniform(-1.0, 1.0, (n, *images.shape[1:]))
        from . import tensor as T

        with T.no_grad():
            samples = M.generate(gen, z, cond, mode="infer").data
        D.save_grid(samples, sub / "final_samples.pgm")
        runs[tag] = nearest_training_residual(samples, images)

    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("run,mean_nearest_training_residual\n")
        for tag in ("real", "random"):
            fh.write(f"{tag},{runs[tag]!r}\n")
    print(
        f"nearest-training residual: real={runs['real']:.6f} random={runs['random']:.6f}"
    )
    run.done()
    return 0


# ----------------------------------------------------------------------
# pipeline
# ----------------------------------------------------------------------


def cmd_pipeline(res: dict) -> int:
    out = Path(res["out"])
    run = _RunDir(out)
    _freeze_config(out, res)
    seed = int(res["seed"])
    size = int(res["size"])
    target = res["target_class"]
    other = res["contrast_class"]

    # 1. synthetic dataset + split (target trains, contrast is test-only pool)
    data_dir = out / "data"
    synth_res = dict(res)
    synth_res.update(
        out=str(data_dir), classes=f"{other},{target}", train_classes=target,
    )
    cmd_synth(synth_res)
    dataset, split = _load_split_images(data_dir, size=size)
    train_imgs = _images_for(dataset, split, target, ("train",))

    # 2. augmentation sources: one conditional and one unconditional generator
    aug_epochs = int(res["aug_epochs"])
    aug_res = dict(res, epochs=aug_epochs)
    gen_ia, _, _ = _train_once(aug_res, out / "aug_iagan", "iagan", "real", train_imgs)
    gen_dc, _, _ = _train_once(aug_res, out / "aug_dcgan", "dcgan", "real", train_imgs)

    # 3. four training sets
    k = int(res["k"])
    n_trad = int(res["n"])
    inputs_all = {}
    for c in dataset:
        ids_all, imgs = dataset[c]
        index = {i: j for j, i in enumerate(ids_all)}
        wanted = split.ids(c, "train") + split.ids(c, "pool")
        inputs_all[c] = (wanted, imgs[[index[i] for i in wanted]])

    sets: dict[str, np.ndarray] = {"none": train_imgs}
    _, ia_imgs, ia_manifest = AU.augment_iagan(gen_ia, inputs_all, target, k=k, seed=derive_seed(seed, "aug", "iagan"))
    sets["iagan"] = np.concatenate([train_imgs, ia_imgs]) if ia_imgs.size else train_imgs
    src_train = split.ids(target, "train")
    _, dc_imgs, dc_manifest = AU.augment_dcgan(gen_dc, src_train, target, k=k, seed=derive_seed(seed, "aug", "dcgan"))
    sets["dcgan"] = np.concatenate([train_imgs, dc_imgs]) if dc_imgs.size else train_imgs
    trad_list = []
    for j, img in enumerate(train_imgs):
        outs, _ = AU.augment_traditional(img, n=n_trad, rng=rng_for(seed, "aug", "trad", j))
        trad_list.append(outs)
    sets["traditional"] = np.concatenate([train_imgs] + trad_list) if trad_list else train_imgs
    ia_manifest.save(out / "manifest_iagan.csv")
    dc_manifest.save(out / "manifest_dcgan.csv")

    # 4..6. train the anomaly detector on each set, score the test split, eval
    test_ids, test_images, test_labels = [], [], {}
    for c in sorted(dataset):
        ids_all, imgs = dataset[c]
        index = {i: j for j, i in enumerate(ids_all)}
        for i in split.ids(c, "test"):
            test_ids.append(i)
            test_images.append(imgs[index[i]])
            test_labels[i] = c
    test_images = np.stack(test_images)
    labels_bin = np.array([1 if test_labels[i] == other else 0 for i in test_ids])

    score_files = {}
    for name in ("none", "iagan", "dcgan", "traditional"):
        model_out = out / f"anogan_{name}"
        gen, disc, _ = _train_once(dict(res, seed=derive_seed(seed, "anogan", name)), model_out, "dcgan", "real", sets[name])
        cfg = AG.SearchConfig(
            iterations=int(res["iterations"]),
            lam=float(res["lam"]),
            seed=derive_seed(seed, "score", name),
            step_size=float(res["step_size"]),
        )
        results = AG.score_images(test_images, test_ids, gen, disc, cfg, batch_size=int(res["batch_size"]))
        path = out / f"scores_{name}.csv"
        AG.write_scores_csv(path, results, test_labels)
        score_files[name] = path

    rows = []
    base_rows = AG.read_scores_csv(score_files["none"])
    base_scores = np.array([r["score"] for r in base_rows])
    for name in ("none", "iagan", "dcgan", "traditional"):
        rws = AG.read_scores_csv(score_files[name])
        scores = np.array([r["score"] for r in rws])
        auc_val = MX.auc(scores, labels_bin)
        op = MX.operating_point(scores, labels_bin)
        p = None
        if name != "none":
            p = MX.delong_test(scores, base_scores, labels_bin).p_value
        rows.append(
            {
                "experiment": name, "auc": auc_val, "p_vs_baseline": p,
                "sens": op.sensitivity, "spec": op.specificity,
                "acc": op.accuracy, "threshold": op.threshold,
            }
        )
    MX.write_metrics_csv(out / "metrics.csv", rows)
    order = sorted(rows, key=lambda r: -r["auc"])
    print("AUC ordering:", " > ".join(f"{r['experiment']}({r['auc']:.3f})" for r in order))
    run.done()
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------


def _add_common(sp, *, size=True):
    sp.add_argument("--config", help="key = value file; flags override it")
    sp.add_argument("--seed", type=int, default=0)
    if size:
        sp.add_argument("--size", type=int, default=32)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    p = argparse.ArgumentParser(prog="ganlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    sp = sub.add_parser("synth", help="generate a phantom dataset with a split manifest")
    _add_common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--classes", default="normal,pneumonia_like,covid_like")
    sp.add_argument("--per-class", dest="per_class", type=int, default=200)
    sp.add_argument("--test-per-class", dest="test_per_class", type=int, default=50)
    sp.add_argument("--train-classes", dest="train_classes", default="")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a generator/discriminator pair")
    _add_common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--variant", choices=["iagan", "dcgan"], default="iagan")
    sp.add_argument("--class", dest="target_class", default="pneumonia_like")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    sp.add_argument("--base-channels", dest="base_channels", type=int, default=16)
    sp.add_argument("--z-dim", dest="z_dim", type=int, default=120)
    sp.add_argument("--lr-d", dest="lr_d", type=float, default=4e-4)
    sp.add_argument("--lr-g", dest="lr_g", type=float, default=1e-4)
    sp.add_argument("--generator-loss", dest="generator_loss", choices=["non_saturating", "minimax"], default="non_saturating")
    sp.add_argument("--encoder-input", dest="encoder_input", choices=["real", "random"], default="real")
    sp.add_argument("--sample-every", dest="sample_every", type=int, default=100)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("augment", help="build an augmented training set")
    _add_common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", choices=["iagan", "dcgan", "traditional"], required=True)
    sp.add_argument("--model", default="", help="checkpoint dir of the trained generator")
    sp.add_argument("--class", dest="target_class", default="pneumonia_like")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--table-arithmetic", dest="table_arithmetic", action="store_true")
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("score", help="anomaly-score a dataset split")
    _add_common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--models", required=True, help="one or two (comma) checkpoint dirs")
    sp.add_argument("--split", default="test")
    sp.add_argument("--out", required=True)
    sp.add_argument("--iterations", type=int, default=800)
    sp.add_argument("--lam", type=float, default=0.2)
    sp.add_argument("--step-size", dest="step_size", type=float, default=0.01)
    sp.add_argument("--optimizer", choices=["adam", "gradient_descent"], default="adam")
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=25)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="AUC, operating point, DeLong p vs a baseline")
    _add_common(sp, size=False)
    sp.add_argument("--scores", required=True)
    sp.add_argument("--baseline", default="")
    sp.add_argument("--out", required=True)
    sp.add_argument("--positive-class", dest="positive_class", default=None)
    sp.add_argument("--experiment", default=None)
    sp.add_argument("--min-sens", dest="min_sens", type=float, default=0.80)
    sp.add_argument("--min-spec", dest="min_spec", type=float, default=0.80)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate-random-input", help="train with real vs random encoder input and compare")
    _add_common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--class", dest="target_class", default="pneumonia_like")
    sp.add_argument("--epochs", type=int, default=12)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    sp.add_argument("--base-channels", dest="base_channels", type=int, default=8)
    sp.add_argument("--z-dim", dest="z_dim", type=int, default=32)
    sp.add_argument("--lr-d", dest="lr_d", type=float, default=4e-4)
    sp.add_argument("--lr-g", dest="lr_g", type=float, default=1e-4)
    sp.add_argument("--generator-loss", dest="generator_loss", default="non_saturating")
    sp.add_argument("--sample-every", dest="sample_every", type=int, default=100)
    sp.add_argument("--grid-epochs", dest="grid_epochs", default="5,10,25,50,100,150")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("pipeline", help="synth -> train -> augment -> score -> eval, four ways")
    _add_common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--per-class", dest="per_class", type=int, default=24)
    sp.add_argument("--test-per-class", dest="test_per_class", type=int, default=8)
    sp.add_argument("--class", dest="target_class", default="pneumonia_like")
    sp.add_argument("--contrast-class", dest="contrast_class", default="normal")
    sp.add_argument("--epochs", type=int, default=2)
    sp.add_argument("--aug-epochs", dest="aug_epochs", type=int, default=2)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=8)
    sp.add_argument("--base-channels", dest="base_channels", type=int, default=8)
    sp.add_argument("--z-dim", dest="z_dim", type=int, default=32)
    sp.add_argument("--lr-d", dest="lr_d", type=float, default=4e-4)
    sp.add_argument("--lr-g", dest="lr_g", type=float, default=1e-4)
    sp.add_argument("--generator-loss", dest="generator_loss", default="non_saturating")
    sp.add_argument("--iterations", type=int, default=40)
    sp.add_argument("--lam", type=float, default=0.2)
    sp.add_argument("--step-size", dest="step_size", type=float, default=0.05)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--n", type=int, default=8)
    sp.set_defaults(func=cmd_pipeline)
    for action in sub.choices:
        subparsers[action] = sub.choices[action]
    return p, subparsers


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    sp = subparsers[args.command]
    defaults = {k: sp.get_default(k) for k in vars(args) if k not in ("func", "command")}
    try:
        resolved = _resolve(args, defaults)
        resolved["command"] = args.command
        return args.func(resolved)
    except GanlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
