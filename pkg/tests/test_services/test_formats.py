"""Tests for the EMB1 codec, label volumes and HU normalization."""

import struct

import numpy as np
import pytest

from mir3d.errors import DataError, FormatError, TruncationError
from mir3d.models import LabelVolume
from mir3d.services.embedding_service import (
    MAGIC,
    decode_embeddings,
    encode_embeddings,
    load_embeddings,
    write_embeddings,
)
from mir3d.services.volume_service import (
    load_label_volume,
    normalize_hu,
    normalize_hu_array,
    raw_path_for,
    write_label_volume,
)
from tests.conftest import make_matrix


class TestEmbeddingCodec:
    """Tests for the EMB1 format."""

    def test_layout(self):
        """Header is magic, version, dim, count; rows are index then floats."""
        data = encode_embeddings(make_matrix("v", [[1.0, 2.0]], start=7))
        assert data[:9] == MAGIC
        assert struct.unpack_from("<BIQ", data, 9) == (1, 2, 1)
        assert struct.unpack_from("<Iff", data, 22) == (7, 1.0, 2.0)
        assert len(data) == 22 + 12

    def test_decode_matches_input(self):
        rng = np.random.default_rng(0)
        vectors = rng.standard_normal((5, 8)).astype(np.float32)
        matrix = decode_embeddings(encode_embeddings(make_matrix("v", vectors)), "v")
        assert matrix.volume_id == "v"
        assert matrix.slice_indices.tolist() == [0, 1, 2, 3, 4]
        np.testing.assert_array_equal(matrix.vectors, vectors)

    def test_bad_magic(self):
        data = bytearray(encode_embeddings(make_matrix("v", [[1.0]])))
        data[0:1] = b"X"
        with pytest.raises(FormatError, match="magic"):
            decode_embeddings(bytes(data), "v")

    def test_bad_version(self):
        data = bytearray(encode_embeddings(make_matrix("v", [[1.0]])))
        data[9] = 2
        with pytest.raises(FormatError, match="version"):
            decode_embeddings(bytes(data), "v")

    def test_truncated_body(self):
        data = encode_embeddings(make_matrix("v", [[1.0, 2.0], [3.0, 4.0]]))
        with pytest.raises(TruncationError):
            decode_embeddings(data[:-1], "v")

    def test_nan_component(self):
        header = struct.pack("<9sBIQ", MAGIC, 1, 1, 1)
        body = struct.pack("<If", 0, float("nan"))
        with pytest.raises(DataError):
            decode_embeddings(header + body, "v")

    def test_file_round_trip_uses_stem(self, temp_dir):
        path = temp_dir / "vol9.emb"
        write_embeddings(path, make_matrix("vol9", [[0.5, 0.25]]))
        matrix = load_embeddings(path)
        assert matrix.volume_id == "vol9"
        assert matrix.vectors.tolist() == [[0.5, 0.25]]


class TestLabelVolumeFiles:
    """Tests for header + raw label volumes."""

    def test_x_fastest_storage(self, temp_dir):
        voxels = np.zeros((2, 3, 4), dtype=np.uint8)
        voxels[0, 0, 1] = 1  # x=1, y=0, z=0
        header = temp_dir / "mask.yaml"
        write_label_volume(header, LabelVolume(voxels, (0.5, 0.5, 2.0)))

        raw = raw_path_for(header).read_bytes()
        assert len(raw) == 24
        assert raw[1] == 1
        loaded = load_label_volume(header)
        assert loaded.dims == (4, 3, 2)
        assert loaded.spacing_mm == (0.5, 0.5, 2.0)
        np.testing.assert_array_equal(loaded.voxels, voxels)

    def test_i16_volume(self, temp_dir):
        voxels = np.full((1, 2, 2), -5, dtype=np.int16)
        header = temp_dir / "ct.yaml"
        write_label_volume(header, LabelVolume(voxels, (1.0, 1.0, 1.0), dtype="i16"))
        assert load_label_volume(header).voxels.tolist() == voxels.tolist()

    def test_raw_length_mismatch(self, temp_dir):
        header = temp_dir / "mask.yaml"
        write_label_volume(header, LabelVolume(np.zeros((2, 2, 2), dtype=np.uint8), (1.0, 1.0, 1.0)))
        raw_path_for(header).write_bytes(b"\x00" * 7)
        with pytest.raises(FormatError, match="expected 8 bytes"):
            load_label_volume(header)

    def test_malformed_header(self, temp_dir):
        header = temp_dir / "mask.yaml"
        header.write_text("dims: [2, 2]\n", encoding="utf-8")
        raw_path_for(header).write_bytes(b"")
        with pytest.raises(FormatError):
            load_label_volume(header)

    def test_missing_raw_is_os_error(self, temp_dir):
        header = temp_dir / "mask.yaml"
        header.write_text("dims: [1, 1, 1]\nspacing_mm: [1, 1, 1]\ndtype: u8\n", encoding="utf-8")
        with pytest.raises(OSError):
            load_label_volume(header)


class TestNormalizeHU:
    """Tests for Hounsfield-unit normalization."""

    @pytest.mark.parametrize(
        ("hu", "expected"),
        [(-1000, 0), (1000, 255), (0, 128), (-2000, 0), (3000, 255), (-996, 1)],
    )
    def test_values(self, hu, expected):
        assert normalize_hu(hu) == expected

    def test_monotone(self):
        values = [normalize_hu(h) for h in range(-1100, 1101)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_array_matches_scalar(self):
        hu = np.arange(-1100, 1101, 7)
        expected = [normalize_hu(int(h)) for h in hu]
        assert normalize_hu_array(hu).tolist() == expected
