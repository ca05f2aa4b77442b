"""File formats: PGM/DMAP/model round trips and malformed-input rejection."""

import json
import struct

import numpy as np
import pytest

from salcal.calib import BinStats
from salcal.fileio import (
    FormatError,
    load_model,
    read_dmap,
    read_mask_pgm,
    read_pgm,
    read_report,
    save_model,
    write_dmap,
    write_mask_pgm,
    write_pgm,
    write_report,
    write_saliency_pgm,
)
from salcal.maps import BinaryMask, SaliencyMap
from salcal.net import init_model


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = rng.integers(0, 256, size=(11, 7)).astype(np.uint8)
        path = tmp_path / "map.pgm"
        write_pgm(path, grid)
        np.testing.assert_array_equal(read_pgm(path), grid)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "tiny.pgm"
        write_pgm(path, np.array([[0, 255]], dtype=np.uint8))
        assert path.read_bytes() == b"P5\n2 1\n255\n\x00\xff"

    def test_reader_accepts_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x01\x02\x03")
        assert read_pgm(path).tolist() == [[0, 1], [2, 3]]

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n....")
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_rejects_wide_maxval(self, tmp_path):
        path = tmp_path / "wide.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_rejects_trailing_bytes(self, tmp_path):
        path = tmp_path / "long.pgm"
        path.write_bytes(b"P5\n1 1\n255\n\x00extra")
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_mask_round_trip_and_validation(self, tmp_path):
        mask = BinaryMask(np.array([[0.0, 1.0], [1.0, 0.0]]))
        path = tmp_path / "mask.pgm"
        write_mask_pgm(path, mask)
        np.testing.assert_array_equal(read_mask_pgm(path).data, mask.data)

        bad = tmp_path / "notmask.pgm"
        write_pgm(bad, np.array([[7]], dtype=np.uint8))
        with pytest.raises(FormatError):
            read_mask_pgm(bad)

    def test_saliency_export_quantizes(self, tmp_path):
        path = tmp_path / "sal.pgm"
        write_saliency_pgm(path, SaliencyMap(np.array([[0.0, 0.5, 1.0]])))
        assert read_pgm(path).tolist() == [[0, 128, 255]]


class TestDmap:
    def test_round_trip_exact_at_float32(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((6, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "m.dmap"
        write_dmap(path, data)
        np.testing.assert_array_equal(read_dmap(path), data)

    def test_three_channel_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        data = rng.random((4, 3, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "rgb.dmap"
        write_dmap(path, data)
        out = read_dmap(path)
        assert out.shape == (4, 3, 3)
        np.testing.assert_array_equal(out, data)

    def test_file_size_2x2_single_channel(self, tmp_path):
        path = tmp_path / "s.dmap"
        write_dmap(path, np.zeros((2, 2)))
        assert path.stat().st_size == 16 + 16  # header + 4 floats

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dmap"
        path.write_bytes(b"XMAP" + struct.pack("<III", 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError):
            read_dmap(path)

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / "short.dmap"
        path.write_bytes(b"DMAP" + struct.pack("<III", 4, 4, 1) + b"\x00" * 8)
        with pytest.raises(FormatError):
            read_dmap(path)

    def test_rejects_nan_payload(self, tmp_path):
        path = tmp_path / "nan.dmap"
        payload = struct.pack("<f", float("nan"))
        path.write_bytes(b"DMAP" + struct.pack("<III", 1, 1, 1) + payload)
        with pytest.raises(FormatError):
            read_dmap(path)

    def test_write_rejects_non_finite(self, tmp_path):
        with pytest.raises(ValueError):
            write_dmap(tmp_path / "inf.dmap", np.array([[np.inf]]))


class TestModelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        model = init_model(5, 77)
        path = tmp_path / "model.mhsd"
        save_model(path, model)
        loaded = load_model(path)
        for a, b in zip(model.param_arrays(), loaded.param_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_payload_size_formula(self, tmp_path):
        for m in (2, 5, 7):
            path = tmp_path / f"m{m}.mhsd"
            save_model(path, init_model(m, 1))
            assert path.stat().st_size == 16 + 8 * (224 + 584 + 9 * m)

    def test_rejects_truncated(self, tmp_path):
        path = tmp_path / "model.mhsd"
        save_model(path, init_model(5, 1))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_model(path)

    def test_rejects_version_mismatch(self, tmp_path):
        path = tmp_path / "model.mhsd"
        save_model(path, init_model(5, 1))
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_model(path)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "model.mhsd"
        save_model(path, init_model(5, 1))
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_model(path)


def make_bins():
    bins = [BinStats(index=i, count=0, conf=None, macc=None) for i in range(12)]
    bins[9] = BinStats(index=9, count=64, conf=0.9, macc=0.1015625)
    return bins


class TestReport:
    def test_schema_and_round_trip(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(
            path,
            dataset_mae=0.0123456789123,
            dataset_max_fbeta=0.987654321987,
            dataset_mean_fbeta=0.5,
            dataset_calibration_c=0.00123456789,
            per_image=[("0000", 0.01, 0.99, 0.002)],
            bins=make_bins(),
        )
        doc = read_report(path)
        assert list(doc.keys()) == ["dataset", "per_image", "bins"]
        assert list(doc["dataset"].keys()) == ["mae", "max_fbeta", "mean_fbeta", "calibration_C"]
        assert list(doc["per_image"][0].keys()) == ["id", "mae", "max_fbeta", "C"]
        assert list(doc["bins"][0].keys()) == ["index", "lo", "hi", "count", "conf", "macc"]
        assert doc["dataset"]["mae"] == 0.0123456789123  # full precision survives
        assert len(doc["bins"]) == 12

    def test_empty_bins_serialized_as_null(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(
            path,
            dataset_mae=0.0,
            dataset_max_fbeta=1.0,
            dataset_mean_fbeta=1.0,
            dataset_calibration_c=0.0,
            per_image=[],
            bins=make_bins(),
        )
        doc = json.loads(path.read_text())
        assert doc["bins"][0]["conf"] is None
        assert doc["bins"][9]["conf"] == 0.9

    def test_rejects_wrong_bin_count(self, tmp_path):
        with pytest.raises(ValueError):
            write_report(
                tmp_path / "r.json",
                dataset_mae=0.0,
                dataset_max_fbeta=1.0,
                dataset_mean_fbeta=1.0,
                dataset_calibration_c=0.0,
                per_image=[],
                bins=make_bins()[:5],
            )
