"""Acceptance gate: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The end-to-end
criteria train small models on one CPU core; expect tens of minutes.
"""

import csv
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ganlab import anogan as AG
from ganlab import augment as AU
from ganlab import data as D
from ganlab import layers as L
from ganlab import metrics as MX
from ganlab import models as M
from ganlab import tensor as T
from ganlab import training as TR
from ganlab.seeds import derive_seed, rng_for
from ganlab.tensor import Tensor

from helpers import check_gradients, directional_check
from test_metrics import BOOTSTRAP_ORACLE_P, make_paired_instance, pairwise_auc

# ---------------------------------------------------------------------------
# pinned desk-scale experiment configuration (seeds chosen once, up front)
# ---------------------------------------------------------------------------

E2E = dict(
    size=32,
    per_class=200,
    test_per_class=50,
    z_dim=64,
    base_channels=12,
    batch_size=16,
    epochs=120,
    lr_d=4e-4,
    lr_g=4e-4,
    data_seed=1234,
    score_iterations=150,
    score_step=0.05,
    score_seed=777,
    score_batch=50,
)

ABLATION = dict(
    epochs=60, batch_size=16, base_channels=8, z_dim=32, lr_g=4e-4, lr_d=4e-4,
    seed=11, size=32, per_class=48, test_per_class=8,
)


def _verdict(name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared desk-trained models (used by latent-search and end-to-end criteria)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def phantom_world():
    cfg = E2E
    data = D.make_phantom_dataset(
        ["normal", "pneumonia_like", "covid_like"], cfg["per_class"], cfg["size"], cfg["data_seed"]
    )
    listing = {c: ids for c, (ids, _) in data.items()}
    split = D.make_split(
        listing, cfg["test_per_class"], cfg["data_seed"], train_classes=["normal", "pneumonia_like"]
    )

    def imgs(cls, role):
        ids, arr = data[cls]
        index = {i: j for j, i in enumerate(ids)}
        sel = split.ids(cls, role)
        return sel, np.stack([arr[index[i]] for i in sel])

    return data, split, imgs


@pytest.fixture(scope="module")
def trained_models(phantom_world):
    _, _, imgs = phantom_world
    cfg = E2E
    models = {}
    for cls in ("pneumonia_like", "normal"):
        _, train_imgs = imgs(cls, "train")
        gen_cfg = M.GeneratorConfig(
            image_size=cfg["size"], z_dim=cfg["z_dim"], base_channels=cfg["base_channels"],
            variant="dcgan", seed=derive_seed(cfg["data_seed"], "model", cls),
        )
        tr_cfg = TR.TrainConfig(
            lr_d=cfg["lr_d"], lr_g=cfg["lr_g"], batch_size=cfg["batch_size"],
            epochs=cfg["epochs"], z_dim=cfg["z_dim"],
            seed=derive_seed(cfg["data_seed"], "train", cls),
        )
        t0 = time.time()
        gen, disc, _ = TR.train(train_imgs, gen_cfg, tr_cfg)
        elapsed = time.time() - t0
        assert elapsed < 1800, f"training {cls} took {elapsed:.0f}s, budget is 30 min"
        models[cls] = (gen, disc)
    return models


@pytest.fixture(scope="module")
def model_scores(phantom_world, trained_models):
    """Anomaly scores for every (model, test class) pair, computed once."""
    _, _, imgs = phantom_world
    cfg = E2E
    scores = {}
    for tag, (gen, disc) in trained_models.items():
        sub = AG.SearchConfig(
            iterations=cfg["score_iterations"], lam=0.2,
            seed=derive_seed(cfg["score_seed"], tag), step_size=cfg["score_step"],
        )
        for cls in ("normal", "pneumonia_like", "covid_like"):
            ids, test_imgs = imgs(cls, "test")
            res = AG.score_images(test_imgs, ids, gen, disc, sub, batch_size=cfg["score_batch"])
            scores[(tag, cls)] = res
    return scores


# ---------------------------------------------------------------------------
# criterion 1: gradient suite
# ---------------------------------------------------------------------------


class TestCriterionGradientSuite:
    N_SEEDS = 20
    TOL = 1e-4

    def test_gradient_suite(self):
        t0 = time.time()
        worst = {}

        for s in range(self.N_SEEDS):
            rng = np.random.default_rng(derive_seed(100, "grad", s))

            x = rng.standard_normal((1, 2, 5, 5))
            w = rng.standard_normal((3, 2, 3, 3)) * 0.5
            b = rng.standard_normal(3)
            worst["conv2d"] = max(
                worst.get("conv2d", 0),
                check_gradients(
                    lambda xt, wt, bt: T.reduce_sum(
                        T.mul(y := L.conv2d(xt, L.ConvSpec(2, 3, 3, stride=2, padding=1), wt, bt), y)
                    ),
                    [x, w, b], tol=self.TOL,
                ),
            )

            x = rng.standard_normal((1, 3, 3, 3))
            w = rng.standard_normal((3, 2, 3, 3)) * 0.5
            b = rng.standard_normal(2)
            worst["conv2d_transpose"] = max(
                worst.get("conv2d_transpose", 0),
                check_gradients(
                    lambda xt, wt, bt: T.reduce_sum(
                        T.mul(y := L.conv2d_transpose(
                            xt, L.ConvSpec(3, 2, 3, stride=2, padding=1, transpose=True), wt, bt), y)
                    ),
                    [x, w, b], tol=self.TOL,
                ),
            )

            x = rng.standard_normal((3, 4))
            w = rng.standard_normal((4, 2))
            b = rng.standard_normal(2)
            worst["dense"] = max(
                worst.get("dense", 0),
                check_gradients(
                    lambda xt, wt, bt: T.reduce_sum(T.mul(y := L.dense(xt, wt, bt), y)),
                    [x, w, b], tol=self.TOL,
                ),
            )

            x = rng.standard_normal((4, 2, 3, 3))
            g = rng.standard_normal(2) + 1.5
            be = rng.standard_normal(2)
            worst["batchnorm"] = max(
                worst.get("batchnorm", 0),
                check_gradients(
                    lambda xt, gt, bt: T.reduce_sum(
                        T.mul(y := L.batchnorm(xt, gt, bt, "train", L.RunningStats.init(2)), y)
                    ),
                    [x, g, be], tol=self.TOL,
                ),
            )

            # activations; inputs kept away from the relu/leaky kink at 0
            x = rng.standard_normal((3, 4))
            x = np.where(np.abs(x) < 1e-3, x + 0.1, x)
            mixer = Tensor(rng.standard_normal((3, 4)))
            for kind in ("relu", "leaky_relu", "tanh", "sigmoid"):
                worst[kind] = max(
                    worst.get(kind, 0),
                    check_gradients(
                        lambda xt, k=kind: T.reduce_sum(T.mul(L.activation(k, xt), mixer)),
                        [x], tol=self.TOL,
                    ),
                )
            worst["softmax"] = max(
                worst.get("softmax", 0),
                check_gradients(
                    lambda xt: T.reduce_sum(T.mul(L.softmax(xt, axis=1), mixer)), [x], tol=self.TOL
                ),
            )

            x = rng.standard_normal((1, 4, 3, 3))
            cq = L.attention_channels(4)
            ap = [rng.standard_normal(sh) * 0.4 for sh in
                  [(cq, 4, 1, 1), (cq, 4, 1, 1), (4, 4, 1, 1), (4, 4, 1, 1), (1,)]]
            worst["self_attention"] = max(
                worst.get("self_attention", 0),
                check_gradients(
                    lambda xt, q, k, v, o, gm: T.reduce_sum(
                        T.mul(y := L.self_attention(xt, L.AttentionParams(q, k, v, o, gm)), y)
                    ),
                    [x] + ap, tol=self.TOL,
                ),
            )

            # block input on a coarse grid: maxpool argmax stays put under fd steps
            x = (rng.permutation(4 * 16).astype(np.float64).reshape(1, 4, 4, 4)) * 0.01
            c1, c3, c5, cp = L.branch_split(4)
            shapes = [(c1, 4, 1, 1), (c1,), (c3, 4, 3, 3), (c3,), (c5, 4, 5, 5), (c5,), (cp, 4, 1, 1), (cp,)]
            ws = [rng.standard_normal(sh) * 0.4 for sh in shapes]

            def block_loss(xt, w1, b1, w3, b3, w5, b5, wp, bp):
                params = L.BlockParams(w1, b1, w3, b3, w5, b5, wp, bp, None, None, 4)
                y = L.inception_residual_block(xt, params)
                return T.reduce_sum(T.mul(y, y))

            worst["inception_residual_block"] = max(
                worst.get("inception_residual_block", 0),
                check_gradients(block_loss, [x] + ws, tol=self.TOL),
            )

        # composed generator and discriminator, directional checks
        for s in range(self.N_SEEDS):
            rng = np.random.default_rng(derive_seed(101, "net", s))
            for variant in ("iagan", "dcgan"):
                gen = M.init_generator(M.GeneratorConfig(
                    image_size=16, z_dim=6, base_channels=4, variant=variant, seed=s))
                disc = M.init_discriminator(M.DiscriminatorConfig(image_size=16, base_channels=4, seed=s))
                z = rng.standard_normal((2, 6))
                xc = rng.uniform(-0.9, 0.9, (2, 1, 16, 16))

                if variant == "iagan":
                    def net_loss(zt, xt):
                        out = M.generate(gen, zt, xt)
                        prob, feats = M.discriminate(disc, out)
                        return T.add(T.reduce_sum(prob), T.scale(T.reduce_sum(T.mul(feats, feats)), 1e-3))

                    err = directional_check(net_loss, [z, xc], rng, tol=self.TOL)
                else:
                    def net_loss(zt):
                        out = M.generate(gen, zt)
                        prob, feats = M.discriminate(disc, out)
                        return T.add(T.reduce_sum(prob), T.scale(T.reduce_sum(T.mul(feats, feats)), 1e-3))

                    err = directional_check(net_loss, [z], rng, tol=self.TOL)
                worst[f"composed_{variant}"] = max(worst.get(f"composed_{variant}", 0), err)

        elapsed = time.time() - t0
        detail = f"{self.N_SEEDS} seeds/op, worst rel err {max(worst.values()):.2e}, {elapsed:.0f}s"
        _verdict("gradient suite: all layer ops and composed nets <= 1e-4", elapsed < 300 and max(worst.values()) <= self.TOL, detail)


# ---------------------------------------------------------------------------
# criterion 2: adjoint identity
# ---------------------------------------------------------------------------


class TestCriterionAdjoint:
    def test_adjoint_identity_100_shapes(self):
        worst = 0.0
        for s in range(100):
            rng = np.random.default_rng(derive_seed(200, "adjoint", s))
            cin = int(rng.integers(1, 5))
            cout = int(rng.integers(1, 5))
            k = int(rng.choice([1, 3, 5]))
            stride = int(rng.choice([1, 2]))
            p = (k - 1) // 2
            h = int(rng.integers(2, 6)) * stride
            n = int(rng.integers(1, 3))
            x = rng.standard_normal((n, cout, h, h))
            w = rng.standard_normal((cin, cout, k, k))
            spec_c = L.ConvSpec(cout, cin, k, stride=stride, padding=p)
            spec_t = L.ConvSpec(cin, cout, k, stride=stride, padding=p, transpose=True)
            y = L.conv2d(Tensor(x), spec_c, Tensor(w)).data
            yr = rng.standard_normal(y.shape)
            xr = L.conv2d_transpose(Tensor(yr), spec_t, Tensor(w)).data
            lhs = float((y * yr).sum())
            rhs = float((x * xr).sum())
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        _verdict("adjoint identity <conv(x),y> = <x,convT(y)> to 1e-10 over 100 shapes",
                 worst <= 1e-10, f"worst {worst:.2e}")


# ---------------------------------------------------------------------------
# criterion 3: loss formulas
# ---------------------------------------------------------------------------


class TestCriterionLossFormulas:
    def test_loss_formulas_exact(self):
        ok = True
        x = np.zeros((1, 8, 8))
        y = np.full((1, 8, 8), 0.5)
        ok &= AG.residual_loss(x, x) == 0.0
        ok &= AG.residual_loss(x, y) == 0.5 * 64
        ok &= AG.residual_loss(y, x) == AG.residual_loss(x, y)
        ok &= (1 - 0.2) * 10.0 + 0.2 * 5.0 == 9.0

        gen = M.init_generator(M.GeneratorConfig(image_size=16, z_dim=8, base_channels=4, variant="dcgan", seed=31))
        disc = M.init_discriminator(M.DiscriminatorConfig(image_size=16, base_channels=4, seed=31))
        rng = rng_for(300, "x")
        img = rng.uniform(-1, 1, (1, 1, 16, 16))
        z = rng.standard_normal(8)
        ok &= AG.mapping_loss(img, z, gen, disc, 0.0) == AG.residual_loss(
            img, M.generate(gen, z.reshape(1, -1)).data)
        gx = M.generate(gen, z.reshape(1, -1)).data
        ok &= AG.mapping_loss(img, z, gen, disc, 1.0) == AG.discrimination_loss(img, gx, disc)
        ok &= AG.discrimination_loss(img, img, disc) == 0.0

        # recomposition is bit-exact on every stored result
        recompose_ok = True
        for i in range(12):
            xq = rng.uniform(-1, 1, (1, 1, 16, 16))
            cfg = AG.SearchConfig(iterations=8, lam=0.2, seed=i, step_size=0.05)
            r = AG.latent_search(xq, gen, disc, cfg, image_id=f"a{i}")
            recompose_ok &= r.score == r.recompose()
        batch = AG.score_images(
            rng.uniform(-1, 1, (4, 1, 16, 16)), list("abcd"), gen, disc,
            AG.SearchConfig(iterations=8, lam=0.2, seed=3, step_size=0.05), batch_size=4)
        for r in batch:
            recompose_ok &= r.score == r.recompose()
        _verdict("loss formulas exact; A(x) recomposition bit-exact", bool(ok and recompose_ok))


# ---------------------------------------------------------------------------
# criterion 5: augmentation arithmetic
# ---------------------------------------------------------------------------


class TestCriterionAugmentArithmetic:
    def test_table_totals(self):
        ds1 = {"pneumonia": 3765, "normal": 1075}
        ds2 = {"normal": 7477, "pneumonia": 4700}
        checks = []

        m = AU.build_manifest("dcgan", ds1, "pneumonia", k=3)
        m.check(); checks.append(m.total == 15060)
        m = AU.build_manifest("dcgan", ds2, "normal", k=3)
        m.check(); checks.append(m.total == 29908)
        m = AU.build_manifest("dcgan", ds2, "pneumonia", k=3)
        m.check(); checks.append(m.total == 18800)

        m = AU.build_manifest("traditional", ds1, "pneumonia", n=8)
        m.check(); checks.append(m.total == 33885)
        m = AU.build_manifest("traditional", ds2, "normal", n=8)
        m.check(); checks.append(m.total == 67293)
        m = AU.build_manifest("traditional", ds2, "pneumonia", n=8)
        m.check(); checks.append(m.total == 42300)

        m = AU.build_manifest("iagan", ds1, "pneumonia", k=3, table_arithmetic=True)
        m.check(); checks.append(m.total == 19360)
        m = AU.build_manifest("iagan", ds2, "normal", k=3, table_arithmetic=True)
        m.check(); checks.append(m.total == 48708)
        m = AU.build_manifest("iagan", ds2, "pneumonia", k=3, table_arithmetic=True)
        m.check(); checks.append(m.total == 48708)
        m = AU.build_manifest("iagan", ds1, "pneumonia", k=3)
        m.check(); checks.append(m.total == 18285)

        _verdict(
            "augmentation manifests reproduce published totals with integrity recounts",
            all(checks), f"{sum(checks)}/10 totals",
        )


# ---------------------------------------------------------------------------
# criterion 6: statistics oracles
# ---------------------------------------------------------------------------


class TestCriterionStatistics:
    def test_auc_oracle_1000_instances(self):
        rng = np.random.default_rng(derive_seed(400, "auc"))
        exact = 0
        for _ in range(1000):
            n = int(rng.integers(4, 51))
            scores = np.round(rng.standard_normal(n) * 2) / 4.0  # plenty of ties
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            if MX.auc(scores, labels) == pairwise_auc(scores, labels):
                exact += 1
        _verdict("AUC matches exhaustive pairwise oracle exactly on 1000 instances",
                 exact == 1000, f"{exact}/1000 exact")

    def test_trapezoid_vs_pairwise(self):
        rng = np.random.default_rng(derive_seed(400, "trap"))
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(6, 60))
            scores = np.round(rng.standard_normal(n), 1)
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            worst = max(worst, abs(MX.roc_curve(scores, labels).area() - MX.auc(scores, labels)))
        _verdict("trapezoid and pairwise AUC agree to 1e-12", worst <= 1e-12, f"worst {worst:.2e}")

    def test_delong_vs_frozen_bootstrap(self):
        worst = 0.0
        for i, oracle_p in enumerate(BOOTSTRAP_ORACLE_P):
            sa, sb, labels = make_paired_instance(i)
            worst = max(worst, abs(MX.delong_test(sa, sb, labels).p_value - oracle_p))
        _verdict("DeLong p within 0.02 of 10k-resample paired bootstrap (20 instances)",
                 worst <= 0.02, f"worst |dp| {worst:.4f}")

    def test_identical_scores_p_exactly_one(self):
        rng = np.random.default_rng(derive_seed(400, "ident"))
        s = rng.standard_normal(30)
        labels = np.array([0, 1] * 15)
        res = MX.delong_test(s, s.copy(), labels)
        _verdict("identical classifiers give p = 1 exactly", res.p_value == 1.0 and res.z == 0.0)


# ---------------------------------------------------------------------------
# criterion 4: latent-search guarantees on a desk-trained generator
# ---------------------------------------------------------------------------


class TestCriterionLatentSearch:
    def test_search_guarantees(self, trained_models):
        gen, disc = trained_models["pneumonia_like"]
        z_dim = gen.config.z_dim
        cfg = AG.SearchConfig(iterations=40, lam=0.2, seed=41, step_size=0.05)
        mono = final_ok = 0
        n_cases = 20
        for i in range(n_cases):
            z_star = rng_for(500, "zstar", i).standard_normal((1, z_dim))
            with T.no_grad():
                x = M.generate(gen, z_star).data
            res = AG.latent_search(x, gen, disc, cfg, image_id=f"case{i}")
            best_seen = np.minimum.accumulate(res.trajectory)
            if np.all(np.diff(best_seen) <= 0):
                mono += 1
            if res.score <= res.trajectory[0]:
                final_ok += 1
            # seeded at the optimum, nothing worse than L(z*) may be reported
            res_opt = AG.latent_search(x, gen, disc, cfg, z0=z_star, image_id=f"opt{i}")
            l_star = res_opt.trajectory[0]
            final_ok -= 0 if res_opt.score <= l_star else 1
        _verdict("latent search: monotone best-loss, final <= initial, optimum start never worse",
                 mono == n_cases and final_ok == n_cases, f"{mono}/{n_cases} monotone")


# ---------------------------------------------------------------------------
# criterion 7: end-to-end phantom experiment
# ---------------------------------------------------------------------------


class TestCriterionEndToEnd:
    def test_a_separation_auc(self, model_scores):
        sp = np.array([r.score for r in model_scores[("pneumonia_like", "pneumonia_like")]])
        sn = np.array([r.score for r in model_scores[("pneumonia_like", "normal")]])
        scores = np.concatenate([sp, sn])
        labels = np.concatenate([np.zeros(sp.size), np.ones(sn.size)]).astype(int)
        auc_val = MX.auc(scores, labels)
        _verdict("(a) pneumonia-trained model separates classes, AUC >= 0.75",
                 auc_val >= 0.75, f"AUC {auc_val:.4f} at pinned seed")

    def test_b_dual_score_ordering(self, model_scores):
        dual = {}
        for cls in ("normal", "pneumonia_like", "covid_like"):
            a = np.array([r.score for r in model_scores[("pneumonia_like", cls)]])
            b = np.array([r.score for r in model_scores[("normal", cls)]])
            dual[cls] = float((a + b).mean())
        ok = dual["covid_like"] > dual["pneumonia_like"] and dual["covid_like"] > dual["normal"]
        _verdict(
            "(b) dual score ranks the unseen class above both trained-on classes",
            ok,
            f"covid {dual['covid_like']:.1f} vs pneu {dual['pneumonia_like']:.1f} / norm {dual['normal']:.1f}",
        )

    def test_c_four_way_pipeline(self, tmp_path):
        out = tmp_path / "pipe"
        rc = subprocess.run(
            [sys.executable, "-m", "ganlab.cli", "pipeline", "--out", str(out), "--seed", "7",
             "--per-class", "16", "--test-per-class", "5", "--epochs", "2", "--aug-epochs", "2",
             "--iterations", "25", "--size", "32", "--base-channels", "8", "--batch-size", "4",
             "--z-dim", "32"],
            capture_output=True, text=True,
        )
        assert rc.returncode == 0, rc.stderr
        rows = list(csv.DictReader(open(out / "metrics.csv")))
        experiments = [r["experiment"] for r in rows]
        structure_ok = experiments == ["none", "iagan", "dcgan", "traditional"]
        p_ok = all(r["p_vs_baseline"] != "" for r in rows if r["experiment"] != "none")
        aucs = {r["experiment"]: float(r["auc"]) for r in rows}
        order = sorted(aucs, key=lambda k: -aucs[k])
        # the ordering across augmentation methods is reported, not asserted
        _verdict(
            "(c) four-way comparison completes with table-shaped metrics.csv",
            structure_ok and p_ok,
            "AUC order: " + " > ".join(f"{k}({aucs[k]:.3f})" for k in order),
        )


# ---------------------------------------------------------------------------
# criterion 8: pipeline determinism
# ---------------------------------------------------------------------------


class TestCriterionDeterminism:
    def test_pipeline_seed7_byte_identical(self, tmp_path):
        outs = []
        for run in ("r1", "r2"):
            out = tmp_path / run
            rc = subprocess.run(
                [sys.executable, "-m", "ganlab.cli", "pipeline", "--out", str(out), "--seed", "7",
                 "--per-class", "12", "--test-per-class", "4", "--epochs", "2", "--aug-epochs", "2",
                 "--iterations", "15", "--size", "32", "--base-channels", "8", "--batch-size", "4",
                 "--z-dim", "32"],
                capture_output=True, text=True,
                env={**os.environ, "OPENBLAS_NUM_THREADS": "1", "OMP_NUM_THREADS": "1"},
            )
            assert rc.returncode == 0, rc.stderr
            outs.append(out)
        metrics_same = (outs[0] / "metrics.csv").read_bytes() == (outs[1] / "metrics.csv").read_bytes()
        ck_same = True
        for ck in sorted((outs[0] / "anogan_none" / "final" / "generator").iterdir()):
            other = outs[1] / "anogan_none" / "final" / "generator" / ck.name
            ck_same &= ck.read_bytes() == other.read_bytes()
        _verdict("pipeline --seed 7 twice: byte-identical metrics.csv and checkpoints",
                 metrics_same and ck_same)


# ---------------------------------------------------------------------------
# criterion 9: random-encoder-input ablation
# ---------------------------------------------------------------------------


class TestCriterionAblation:
    def test_ablation_residual_ordering(self, tmp_path):
        cfg = ABLATION
        data_dir = tmp_path / "data"
        rc = subprocess.run(
            [sys.executable, "-m", "ganlab.cli", "synth", "--out", str(data_dir),
             "--classes", "pneumonia_like", "--per-class", str(cfg["per_class"]),
             "--test-per-class", str(cfg["test_per_class"]), "--seed", str(cfg["seed"]),
             "--size", str(cfg["size"])],
            capture_output=True, text=True,
        )
        assert rc.returncode == 0, rc.stderr
        out = tmp_path / "ablate"
        rc = subprocess.run(
            [sys.executable, "-m", "ganlab.cli", "ablate-random-input", "--data", str(data_dir),
             "--out", str(out), "--class", "pneumonia_like",
             "--epochs", str(cfg["epochs"]), "--batch-size", str(cfg["batch_size"]),
             "--base-channels", str(cfg["base_channels"]), "--z-dim", str(cfg["z_dim"]),
             "--lr-g", str(cfg["lr_g"]), "--lr-d", str(cfg["lr_d"]),
             "--seed", str(cfg["seed"]), "--size", str(cfg["size"])],
            capture_output=True, text=True,
        )
        assert rc.returncode == 0, rc.stderr
        rows = {r["run"]: float(r["mean_nearest_training_residual"])
                for r in csv.DictReader(open(out / "report.csv"))}
        _verdict(
            "ablation: random-input run is no closer to training data than real-input run",
            rows["random"] >= rows["real"],
            f"random {rows['random']:.4f} >= real {rows['real']:.4f} at pinned seed",
        )
