"""Datasets: partitioning, bank packing, CSV contract, synthetic generators."""

import struct

import numpy as np
import pytest

from pimml.errors import CapacityError, PimmlError
from pimml.fixedpoint import Q16_16, quantize_array
from pimml.layout import (
    HEADER_BYTES,
    REAL_FRAC_SENTINEL,
    Dataset,
    ingest_csv,
    minmax_scale,
    pack_partition,
    pack_partition_real,
    partition_rows,
    synth_blobs,
    synth_labels_tree,
    synth_linear,
    unpack_features,
    write_csv,
)


class TestPartition:
    def test_10_rows_4_cores(self):
        assert partition_rows(10, 4).counts() == [3, 3, 2, 2]

    def test_even(self):
        assert partition_rows(8, 8).counts() == [1] * 8

    def test_zero_rows(self):
        assert partition_rows(0, 4).counts() == [0, 0, 0, 0]

    def test_exact_disjoint_cover(self):
        plan = partition_rows(1037, 7)
        covered = []
        for start, count in plan.ranges:
            covered.extend(range(start, start + count))
        assert covered == list(range(1037))
        counts = plan.counts()
        assert max(counts) - min(counts) <= 1

    def test_bad_args(self):
        with pytest.raises(ValueError):
            partition_rows(-1, 4)
        with pytest.raises(ValueError):
            partition_rows(10, 0)


class TestPack:
    def test_block_sizes(self):
        ds = Dataset(np.arange(6.0).reshape(2, 3), np.array([1.0, 2.0]))
        img = pack_partition(ds, partition_rows(2, 1), Q16_16)[0]
        assert img.feature_block_bytes == 24  # 6 elements x 4 B
        assert img.labels_offset == HEADER_BYTES + 24

    def test_element_offset_formula(self):
        ds = Dataset(np.zeros((8, 8)), np.zeros(8))
        img = pack_partition(ds, partition_rows(8, 1), Q16_16)[0]
        assert img.feature_offset(5, 2) == HEADER_BYTES + 168

    def test_roundtrip_equals_quantize(self):
        rng = np.random.default_rng(3)
        ds = Dataset(rng.uniform(-4, 4, (100, 5)), rng.uniform(-4, 4, 100))
        plan = partition_rows(100, 3)
        for img, (start, count) in zip(pack_partition(ds, plan, Q16_16), plan.ranges):
            expect = quantize_array(ds.features[start:start + count], Q16_16)
            assert np.array_equal(np.asarray(img.feature_raws, dtype=np.int64), expect)
            assert np.allclose(
                unpack_features(img, Q16_16),
                expect / 65536.0,
            )

    def test_capacity_error_names_core(self):
        ds = Dataset(np.zeros((100, 8)), np.zeros(100))
        with pytest.raises(CapacityError, match="core 0"):
            pack_partition(ds, partition_rows(100, 2), Q16_16, bank_bytes=128)

    def test_header_encoding(self):
        ds = Dataset(np.zeros((3, 2)), np.zeros(3))
        blob = pack_partition(ds, partition_rows(3, 1), Q16_16)[0].to_bytes()
        rows, feats, frac = struct.unpack("<III", blob[:12])
        assert (rows, feats, frac) == (3, 2, 16)

    def test_real_sentinel(self):
        ds = Dataset(np.ones((2, 2)), np.ones(2))
        img = pack_partition_real(ds, partition_rows(2, 1))[0]
        assert img.frac_bits == REAL_FRAC_SENTINEL
        rows, feats, frac = struct.unpack("<III", img.to_bytes()[:12])
        assert frac == REAL_FRAC_SENTINEL
        assert img.elem_bytes == 8

    def test_streaming_offsets_increase(self):
        ds = Dataset(np.zeros((4, 3)), None)
        img = pack_partition(ds, partition_rows(4, 1), Q16_16)[0]
        offsets = [img.feature_offset(r, f) for r in range(4) for f in range(3)]
        deltas = [b - a for a, b in zip(offsets, offsets[1:])]
        assert all(d == 4 for d in deltas)  # contiguous, no gaps


class TestCsv:
    def test_basic(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1.0,2.0,3.0\n4.0,5.0,6.0\n")
        ds = ingest_csv(p)
        assert ds.n_rows == 2 and ds.n_features == 2
        assert np.array_equal(ds.labels, [3.0, 6.0])

    def test_header_detected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,y\n1,2,3\n")
        assert ingest_csv(p).n_rows == 1

    def test_header_only(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,y\n")
        ds = ingest_csv(p)
        assert ds.n_rows == 0 and ds.n_features == 2

    def test_ragged_row_errors_with_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2,3\n4,5\n")
        with pytest.raises(PimmlError, match=":2"):
            ingest_csv(p)

    def test_non_numeric_cell(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2,3\n4,x,6\n")
        with pytest.raises(PimmlError, match="'x'"):
            ingest_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(PimmlError):
            ingest_csv(p)

    def test_no_labels_mode(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4\n")
        ds = ingest_csv(p, has_labels=False)
        assert ds.n_features == 2 and ds.labels is None

    def test_write_read_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        ds = Dataset(rng.uniform(-4, 4, (20, 3)), rng.uniform(-1, 1, 20))
        p = tmp_path / "d.csv"
        write_csv(ds, p)
        back = ingest_csv(p)
        assert np.array_equal(back.features, ds.features)  # repr is lossless
        assert np.array_equal(back.labels, ds.labels)


class TestScaling:
    def test_minmax_range(self):
        rng = np.random.default_rng(1)
        ds = Dataset(rng.uniform(-100, 300, (50, 4)), rng.uniform(0, 1, 50))
        scaled = minmax_scale(ds)
        assert scaled.features.min() >= -1.0 and scaled.features.max() <= 1.0
        assert np.array_equal(scaled.labels, ds.labels)

    def test_constant_feature(self):
        ds = Dataset(np.full((5, 1), 7.0), None)
        assert np.array_equal(minmax_scale(ds).features, np.full((5, 1), -1.0))


class TestSynth:
    def test_linear_deterministic(self):
        a, wa = synth_linear(100, 4, 0.1, seed=5)
        b, wb = synth_linear(100, 4, 0.1, seed=5)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(wa, wb)

    def test_linear_noise_free(self):
        ds, w = synth_linear(50, 3, 0.0, seed=2)
        assert np.array_equal(ds.labels, ds.features @ w)

    def test_feature_bound(self):
        ds, _ = synth_linear(500, 4, 0.0, seed=3)
        assert np.abs(ds.features).max() <= 4.0

    def test_blobs_labels(self):
        ds, centers = synth_blobs(200, 3, 4, 0.2, seed=7)
        assert centers.shape == (4, 3)
        assert set(np.unique(ds.labels)) <= {0, 1, 2, 3}

    def test_tree_labels_binary(self):
        ds = synth_labels_tree(100, 4, 3, seed=11)
        assert set(np.unique(ds.labels)) <= {0, 1}


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0, np.inf]]), None)

    def test_rejects_label_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(2))
