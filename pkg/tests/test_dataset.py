"""Dataset generation and binary round-trips."""

import numpy as np
import pytest

from ssnp.diffcore import ParameterStore, RngStream, load_store, save_store
from ssnp.doorsim import (
    Dataset,
    DatasetConfig,
    DatasetFormatError,
    generate_dataset,
    load_dataset,
    save_dataset,
)


def small_config(**kw) -> DatasetConfig:
    base = dict(train_doors=12, test_doors=4, images_per_door=3, actions_per_door=5,
                image_size=16, labeled_frac=0.25, seed=7)
    base.update(kw)
    return DatasetConfig(**base)


class TestGeneration:
    def test_labeled_count_exact(self):
        train, test = generate_dataset(small_config(train_doors=800, labeled_frac=0.10, test_doors=1))
        assert train.labeled_count == 80

    def test_rounding(self):
        train, _ = generate_dataset(small_config(train_doors=10, labeled_frac=0.25, test_doors=1))
        assert train.labeled_count == round(0.25 * 10) == 2

    def test_full_supervision(self):
        train, _ = generate_dataset(small_config(labeled_frac=1.0))
        assert all(r.labeled for r in train.records)

    def test_test_doors_always_labeled(self):
        _, test = generate_dataset(small_config(labeled_frac=0.0))
        assert all(r.labeled and r.rewards is not None for r in test.records)

    def test_unlabeled_records_keep_actions_drop_rewards(self):
        train, _ = generate_dataset(small_config(labeled_frac=0.5))
        for rec in train.records:
            assert rec.actions.shape == (5, 4)
            assert (rec.rewards is not None) == rec.labeled

    def test_deterministic_across_runs(self, tmp_path):
        cfg = small_config()
        a_train, a_test = generate_dataset(cfg)
        b_train, b_test = generate_dataset(cfg)
        for a, b in ((a_train, b_train), (a_test, b_test)):
            pa, pb = tmp_path / "a.bin", tmp_path / "b.bin"
            save_dataset(a, str(pa))
            save_dataset(b, str(pb))
            assert pa.read_bytes() == pb.read_bytes()

    def test_shapes_and_ranges(self):
        train, _ = generate_dataset(small_config())
        rec = train.records[0]
        assert rec.images.shape == (3, 16, 16)
        assert rec.images.dtype == np.float32
        assert rec.images.min() >= 0.0 and rec.images.max() <= 1.0

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ValueError):
            DatasetConfig(labeled_frac=1.5)


class TestSerialization:
    def test_round_trip_bit_identical(self, tmp_path):
        train, _ = generate_dataset(small_config())
        p1 = tmp_path / "ds.bin"
        save_dataset(train, str(p1))
        loaded = load_dataset(str(p1))
        p2 = tmp_path / "ds2.bin"
        save_dataset(loaded, str(p2))
        assert p1.read_bytes() == p2.read_bytes()
        for a, b in zip(train.records, loaded.records):
            assert a.kinematics == b.kinematics
            np.testing.assert_array_equal(a.images, b.images)
            np.testing.assert_array_equal(a.actions, b.actions)
            if a.labeled:
                np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_wrong_magic_raises(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOTADATA" + b"\x00" * 64)
        with pytest.raises(DatasetFormatError, match="magic"):
            load_dataset(str(p))

    def test_truncation_raises(self, tmp_path):
        train, _ = generate_dataset(small_config())
        p = tmp_path / "ds.bin"
        save_dataset(train, str(p))
        blob = p.read_bytes()
        p.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(DatasetFormatError, match="truncated"):
            load_dataset(str(p))

    def test_file_size_closed_form(self, tmp_path):
        cfg = small_config()
        train, _ = generate_dataset(cfg)
        p = tmp_path / "ds.bin"
        save_dataset(train, str(p))
        m, n, hw = cfg.images_per_door, cfg.actions_per_door, cfg.image_size
        header = 8 + 6 * 4 + 8 + 8
        per_record = (4 * 8 + 1) + 1 + 4 * m * hw * hw + 32 * n
        labeled = train.labeled_count
        want = header + cfg.train_doors * per_record + labeled * 8 * n
        assert p.stat().st_size == want


class TestParameterStoreSnapshot:
    def test_round_trip(self, tmp_path):
        rng = RngStream(1)
        store = ParameterStore()
        store.create("ctx.w", (3, 4), rng.normal((3, 4)))
        store.create("ctx.b", (4,), rng.normal((4,)))
        store.create("np.scalar", (), np.asarray(2.5))
        store.grad("ctx.w")[...] = 1.0
        from ssnp.diffcore import adam_step

        adam_step(store, 1e-2)
        p = tmp_path / "store.bin"
        with open(p, "wb") as fh:
            save_store(store, fh)
        with open(p, "rb") as fh:
            loaded = load_store(fh)
        assert loaded.step == store.step
        assert set(loaded.names()) == set(store.names())
        for name in store.names():
            np.testing.assert_array_equal(loaded.value(name), store.value(name))
            m0, v0 = store.moments(name)
            m1, v1 = loaded.moments(name)
            np.testing.assert_array_equal(m0, m1)
            np.testing.assert_array_equal(v0, v1)

    def test_bad_magic(self, tmp_path):
        from ssnp.diffcore import CheckpointFormatError

        p = tmp_path / "store.bin"
        p.write_bytes(b"WRONGMAG!" + b"\x00" * 16)
        with pytest.raises(CheckpointFormatError, match="magic"):
            with open(p, "rb") as fh:
                load_store(fh)

    def test_create_after_use_rejected(self):
        store = ParameterStore()
        store.create("a.x", (2,))
        store.value("a.x")
        with pytest.raises(ValueError, match="finalized"):
            store.create("a.y", (2,))
