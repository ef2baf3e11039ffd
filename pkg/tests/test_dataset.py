"""Phantom corpus: determinism, containment, splits, PGM persistence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2s import dataset as ds
from s2s.errors import ConfigError, FormatError


class TestPhantomPairs:
    def test_bit_identical_regeneration(self):
        a = ds.generate_phantom_pair(7, 42, 64)
        b = ds.generate_phantom_pair(7, 42, 64)
        assert np.array_equal(a.contour, b.contour)
        assert np.array_equal(a.structure, b.structure)

    def test_different_indices_differ(self):
        a = ds.generate_phantom_pair(7, 0, 64)
        b = ds.generate_phantom_pair(7, 1, 64)
        assert not np.array_equal(a.contour, b.contour)

    def test_structure_inside_silhouette(self):
        for index in range(1000):
            pair = ds.generate_phantom_pair(11, index, 32)
            outside = pair.contour == 0.0
            assert np.all(pair.structure[outside] == 0.0)

    def test_fill_fraction_bounds(self):
        for index in range(100):
            pair = ds.generate_phantom_pair(3, index, 64)
            fill = pair.contour.mean()
            assert 0.2 <= fill <= 0.7, f"index {index}: fill {fill}"

    def test_value_palette(self):
        pair = ds.generate_phantom_pair(5, 1, 64)
        assert pair.structure.min() >= 0.0
        assert pair.structure.max() <= 1.0
        assert (pair.structure == 1.0).any()  # bone present

    def test_unsupported_resolution(self):
        with pytest.raises(ConfigError):
            ds.generate_phantom_pair(1, 1, 48)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), index=st.integers(0, 2**32 - 1))
    def test_containment_property(self, seed, index):
        pair = ds.generate_phantom_pair(seed, index, 32)
        assert np.all(pair.structure[pair.contour == 0.0] == 0.0)


class TestSplit:
    def test_512_gives_102_test(self):
        train, test = ds.split_dataset(512, seed=1)
        assert len(test) == 102
        assert len(train) == 410

    def test_minimum_count(self):
        train, test = ds.split_dataset(5, seed=0)
        assert len(train) == 4 and len(test) == 1
        with pytest.raises(ConfigError):
            ds.split_dataset(4)

    def test_disjoint_exhaustive(self):
        train, test = ds.split_dataset(97, seed=9)
        merged = np.sort(np.concatenate([train, test]))
        assert np.array_equal(merged, np.arange(97))

    def test_seed_determinism(self):
        a = ds.split_dataset(50, seed=4)
        b = ds.split_dataset(50, seed=4)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        c = ds.split_dataset(50, seed=5)
        assert not np.array_equal(a[1], c[1])


class TestBatches:
    def test_chunk_sizes(self):
        sizes = [len(b) for b in ds.iter_batches(np.arange(10), 4, epoch_seed=0)]
        assert sizes == [4, 4, 2]

    def test_epoch_is_permutation(self):
        indices = np.arange(23)
        seen = np.concatenate(list(ds.iter_batches(indices, 5, epoch_seed=3)))
        assert np.array_equal(np.sort(seen), indices)

    def test_epoch_seeds_change_order(self):
        indices = np.arange(64)
        a = np.concatenate(list(ds.iter_batches(indices, 8, epoch_seed=1)))
        b = np.concatenate(list(ds.iter_batches(indices, 8, epoch_seed=2)))
        assert not np.array_equal(a, b)
        assert np.array_equal(np.sort(a), np.sort(b))


class TestPersistence:
    def test_pgm_roundtrip(self, tmp_path):
        img = np.linspace(0, 1, 64 * 48, dtype=np.float32).reshape(48, 64)
        path = tmp_path / "img.pgm"
        ds.write_pgm(path, img)
        back = ds.read_pgm(path)
        quantized = np.rint(img * 255) / 255
        np.testing.assert_allclose(back, quantized, atol=1e-7)

    def test_pgm_rejects_bad_magic(self):
        with pytest.raises(FormatError):
            ds.read_pgm(b"P2\n2 2\n255\n....")

    def test_pgm_rejects_truncated(self):
        with pytest.raises(FormatError):
            ds.read_pgm(b"P5\n4 4\n255\nab")

    def test_corpus_layout_and_loading(self, tmp_path):
        ds.generate_corpus(tmp_path, count=6, resolution=32, seed=2)
        assert (tmp_path / "000000_y.pgm").exists()
        assert (tmp_path / "000005_x.pgm").exists()
        manifest = ds.read_manifest(tmp_path)
        assert manifest == {"count": 6, "seed": 2, "resolution": 32}
        y, x = ds.load_pairs(tmp_path, [0, 3, 5])
        assert y.shape == (3, 1, 32, 32)
        assert x.shape == (3, 1, 32, 32)
        assert y.min() >= -1.0 and y.max() <= 1.0
        assert y.dtype == np.float32

    def test_signed_unit_mapping(self):
        img = np.array([0.0, 0.5, 1.0], dtype=np.float32)
        signed = ds.to_signed(img)
        np.testing.assert_allclose(signed, [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(ds.to_unit(signed), img)
