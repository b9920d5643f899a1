import numpy as np
import pytest

from ganlab import augment as A
from ganlab import data as D
from ganlab import models as M
from ganlab.errors import ContractError, IntegrityError

# Input counts of the two reference chest X-ray corpora: dataset I trains on
# 3,765 pneumonia images with 1,075 spare normals; dataset II trains on
# 7,477 normal and 4,700 pneumonia images.
DATASET_I = {"pneumonia": 3765, "normal": 1075}
DATASET_II = {"normal": 7477, "pneumonia": 4700}


class TestManifestArithmetic:
    def test_dcgan_dataset_i(self):
        m = A.build_manifest("dcgan", DATASET_I, "pneumonia", k=3)
        assert m.total == 15060
        m.check()

    def test_dcgan_dataset_ii(self):
        m_norm = A.build_manifest("dcgan", DATASET_II, "normal", k=3)
        m_pneu = A.build_manifest("dcgan", DATASET_II, "pneumonia", k=3)
        assert m_norm.total == 29908
        assert m_pneu.total == 18800

    def test_traditional_dataset_i(self):
        m = A.build_manifest("traditional", DATASET_I, "pneumonia", n=8)
        assert m.total == 33885

    def test_traditional_dataset_ii(self):
        assert A.build_manifest("traditional", DATASET_II, "normal", n=8).total == 67293
        assert A.build_manifest("traditional", DATASET_II, "pneumonia", n=8).total == 42300

    def test_iagan_default_matches_prose_counts(self):
        m = A.build_manifest("iagan", DATASET_I, "pneumonia", k=3)
        # 3,765 originals + 3 * (3,765 + 1,075) generated
        assert m.generated == 11295 + 3225
        assert m.total == 18285

    def test_iagan_table_arithmetic(self):
        m1 = A.build_manifest("iagan", DATASET_I, "pneumonia", k=3, table_arithmetic=True)
        assert m1.total == 19360
        m2n = A.build_manifest("iagan", DATASET_II, "normal", k=3, table_arithmetic=True)
        m2p = A.build_manifest("iagan", DATASET_II, "pneumonia", k=3, table_arithmetic=True)
        assert m2n.total == 48708
        assert m2p.total == 48708

    def test_integrity_recount_detects_tampering(self):
        m = A.build_manifest("dcgan", {"pneumonia": 10}, "pneumonia", k=3)
        m.records.pop()
        with pytest.raises(IntegrityError):
            m.check()

    def test_k_zero_yields_originals_only(self):
        m = A.build_manifest("iagan", {"a": 5, "b": 2}, "a", k=0)
        assert m.generated == 0
        assert m.total == 5

    def test_every_record_traceable(self):
        m = A.build_manifest("traditional", {"a": 4}, "a", n=8, seed=3)
        assert len(m.records) == 32
        assert all(r.source_id.startswith("a_") for r in m.records)
        assert len({r.out_id for r in m.records}) == 32

    def test_manifest_csv(self, tmp_path):
        m = A.build_manifest("dcgan", {"a": 2}, "a", k=2)
        p = tmp_path / "manifest.csv"
        m.save(p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "out_id,class,method,source_id,seed,params"
        assert len(lines) == 5


class TestAffine:
    def test_identity_parameters_reproduce_input(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(-1, 1, (1, 16, 16))
        out = A.apply_affine(img, 0.0, 0.0, 0.0, 1.0)
        assert np.abs(out - img).max() <= 1e-12

    def test_rotation_round_trip(self):
        # centered square phantom survives +90 then -90 within bilinear tolerance
        img = np.full((32, 32), -1.0)
        img[8:24, 8:24] = 0.8
        once = A.apply_affine(img, 90.0, 0.0, 0.0, 1.0)
        back = A.apply_affine(once, -90.0, 0.0, 0.0, 1.0)
        assert np.abs(back - img).mean() <= 0.05

    def test_shift_moves_content(self):
        img = np.full((8, 8), -1.0)
        img[3, 3] = 1.0
        out = A.apply_affine(img, 0.0, 2.0, 0.0, 1.0)
        assert out[3, 5] == pytest.approx(1.0)

    def test_fill_value_outside(self):
        img = np.ones((8, 8))
        out = A.apply_affine(img, 0.0, 4.0, 0.0, 1.0)
        assert np.all(out[:, :4] == -1.0)

    def test_outputs_stay_in_range(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(-1, 1, (1, 16, 16))
        outs, _ = A.augment_traditional(img, n=16, rng=np.random.default_rng(9))
        assert outs.min() >= -1.0 and outs.max() <= 1.0

    def test_traditional_determinism(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(-1, 1, (1, 12, 12))
        a, pa = A.augment_traditional(img, n=8, rng=np.random.default_rng(77))
        b, pb = A.augment_traditional(img, n=8, rng=np.random.default_rng(77))
        assert np.array_equal(a, b)
        assert pa == pb

    def test_rejects_bad_shape(self):
        with pytest.raises(ContractError):
            A.augment_traditional(np.zeros((3, 8, 8)), n=2)


@pytest.fixture(scope="module")
def tiny_generators():
    gi = M.init_generator(M.GeneratorConfig(image_size=16, z_dim=8, base_channels=4, variant="iagan", seed=1))
    gd = M.init_generator(M.GeneratorConfig(image_size=16, z_dim=8, base_channels=4, variant="dcgan", seed=1))
    return gi, gd


class TestGanAugmentation:
    def test_iagan_counts_and_determinism(self, tiny_generators):
        gi, _ = tiny_generators
        data = D.make_phantom_dataset(["normal", "pneumonia_like"], 5, 16, 3)
        ids1, imgs1, man1 = A.augment_iagan(gi, data, "pneumonia_like", k=3, seed=11)
        ids2, imgs2, man2 = A.augment_iagan(gi, data, "pneumonia_like", k=3, seed=11)
        assert len(ids1) == 30  # 3 per input over both classes
        assert man1.generated == 30
        assert np.array_equal(imgs1, imgs2)
        assert ids1 == ids2
        assert man1.total == 5 + 30

    def test_iagan_k_zero(self, tiny_generators):
        gi, _ = tiny_generators
        data = D.make_phantom_dataset(["pneumonia_like"], 4, 16, 3)
        ids, imgs, man = A.augment_iagan(gi, data, "pneumonia_like", k=0, seed=1)
        assert ids == [] and imgs.shape[0] == 0
        assert man.total == 4

    def test_dcgan_counts(self, tiny_generators):
        _, gd = tiny_generators
        ids, imgs, man = A.augment_dcgan(gd, [f"p{i}" for i in range(5)], "pneumonia_like", k=1, seed=2)
        assert len(ids) == 5
        assert imgs.shape == (5, 1, 16, 16)
        assert man.total == 10

    def test_dcgan_rejects_iagan_generator(self, tiny_generators):
        gi, _ = tiny_generators
        with pytest.raises(ContractError):
            A.augment_dcgan(gi, ["a"], "x", k=1)

    def test_outputs_in_range_and_shape(self, tiny_generators):
        _, gd = tiny_generators
        _, imgs, _ = A.augment_dcgan(gd, ["a", "b"], "c", k=2, seed=3)
        assert imgs.shape == (4, 1, 16, 16)
        assert imgs.min() > -1.0 and imgs.max() < 1.0

    def test_build_augmented_set_combines(self, tiny_generators):
        _, gd = tiny_generators
        data = D.make_phantom_dataset(["pneumonia_like"], 6, 16, 5)
        ids, imgs, man = A.augment_dcgan(gd, data["pneumonia_like"][0], "pneumonia_like", k=3, seed=4)
        all_ids, combined, man2 = A.build_augmented_set(data, (ids, imgs, man), "pneumonia_like")
        assert combined.shape[0] == 24  # 4x originals
        assert len(all_ids) == 24
        assert man2.total == 24
