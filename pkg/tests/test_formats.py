import os
import struct
from pathlib import Path

import numpy as np
import pytest

from laserforge.errors import BadDimensions, BadMagic, ParseError, Truncated, UnsupportedMaxval, ValidationError
from laserforge.formats import (
    dumps_json,
    read_json,
    read_pgm,
    read_ply,
    write_file_atomic,
    write_json,
    write_pgm,
    write_ply,
)
from laserforge.reconstruction import PointCloud

DATA = Path(__file__).parent / "data"
THREE = PointCloud([[1, 2.5, -3], [0, -0.125, 400.0625], [-12.345678, 98.765432, 0.000001]])

HEADER = b"ply\nformat %s 1.0\ncomment laserforge\nelement vertex %d\nproperty float x\nproperty float y\nproperty float z\n"


class TestPly:
    def test_golden_ascii(self):
        assert write_ply(THREE) == (DATA / "three_points.ply").read_bytes()

    def test_ascii_stable(self):
        assert write_ply(THREE, "ascii") == write_ply(PointCloud(THREE.points.copy()), "ascii")

    def test_one_point_ascii(self):
        out = write_ply(PointCloud([[1, 2.5, -3]]))
        assert out == HEADER % (b"ascii", 1) + b"end_header\n1.000000 2.500000 -3.000000\n"

    def test_one_point_binary(self):
        out = write_ply(PointCloud([[1, 2.5, -3]]), "binary_little_endian")
        head = HEADER % (b"binary_little_endian", 1) + b"end_header\n"
        assert out[: len(head)] == head
        body = out[len(head) :]
        assert len(body) == 12
        assert body == struct.pack("<3f", 1.0, 2.5, -3.0)
        assert body == bytes.fromhex("0000803f" "00002040" "000040c0")

    def test_binary_alias(self):
        assert write_ply(THREE, "binary") == write_ply(THREE, "binary_little_endian")

    def test_binary_three_points(self):
        out = write_ply(THREE, "binary_little_endian")
        body = out[out.index(b"end_header\n") + 11 :]
        assert body == b"".join(struct.pack("<3f", *p) for p in THREE.points.tolist())

    def test_empty(self):
        assert write_ply(PointCloud(np.empty((0, 3)))) == HEADER % (b"ascii", 0) + b"end_header\n"

    def test_colors(self):
        c = PointCloud([[1, 2, 3]], [[255, 0, 7]])
        ascii_out = write_ply(c)
        assert b"property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n" in ascii_out
        assert ascii_out.endswith(b"1.000000 2.000000 3.000000 255 0 7\n")
        bin_out = write_ply(c, "binary")
        assert bin_out.endswith(struct.pack("<3f", 1, 2, 3) + bytes([255, 0, 7]))

    def test_single_linefeeds(self):
        assert b"\r" not in write_ply(THREE)

    def test_unknown_format(self):
        with pytest.raises(ValidationError):
            write_ply(THREE, "binary_big_endian")

    @pytest.mark.parametrize("fmt", ["ascii", "binary_little_endian"])
    def test_read_round_trip(self, fmt):
        c = PointCloud(np.random.default_rng(0).normal(size=(30, 3)) * 100, np.arange(90).reshape(30, 3))
        back = read_ply(write_ply(c, fmt))
        assert np.allclose(back.points, c.points.astype(np.float32), atol=1e-6 * 400)
        assert np.array_equal(back.colors, c.colors)

    def test_read_truncated(self):
        with pytest.raises(Truncated):
            read_ply(write_ply(THREE, "binary")[:-5])
        with pytest.raises(Truncated):
            read_ply(write_ply(THREE)[:-30])

    def test_read_garbage(self):
        with pytest.raises(ParseError):
            read_ply(b"hello")


class TestPgm:
    def test_minimal(self):
        assert write_pgm(np.zeros((1, 1), np.uint8)) == b"P5\n1 1\n255\n\x00"

    def test_round_trip(self):
        img = np.random.default_rng(42).integers(0, 256, (480, 640), dtype=np.uint8)
        data = write_pgm(img)
        assert data.startswith(b"P5\n640 480\n255\n") and len(data) == 15 + 640 * 480
        back = read_pgm(data)
        assert back.shape == (480, 640) and np.array_equal(back, img)

    def test_comments_and_whitespace(self):
        data = b"P5\n# made by hand\n3  2\n# maxval next\n255\n" + bytes(range(6))
        assert read_pgm(data).tolist() == [[0, 1, 2], [3, 4, 5]]

    def test_maxval_65535(self):
        with pytest.raises(UnsupportedMaxval):
            read_pgm(b"P5\n1 1\n65535\n\x00\x00")

    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            read_pgm(b"P2\n1 1\n255\n0")

    @pytest.mark.parametrize("header", [b"P5\n0 1\n255\n", b"P5\nx 1\n255\n", b"P5\n-2 1\n255\n"])
    def test_bad_dimensions(self, header):
        with pytest.raises(BadDimensions):
            read_pgm(header + b"\x00\x00")

    def test_truncated(self):
        with pytest.raises(Truncated):
            read_pgm(b"P5\n2 2\n255\n\x00\x00\x00")
        with pytest.raises(Truncated):
            read_pgm(b"P5\n2 2")


class TestJsonAndAtomic:
    def test_float_round_trip(self, tmp_path):
        obj = {"a": [0.1, 1 / 3, 1e-300, -2.5e17], "b": "x"}
        write_json(tmp_path / "o.json", obj)
        assert read_json(tmp_path / "o.json") == obj

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            dumps_json({"a": float("nan")})

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        with pytest.raises(ParseError):
            read_json(p)

    def test_atomic_overwrite_leaves_no_temp(self, tmp_path):
        p = tmp_path / "f.bin"
        write_file_atomic(p, b"one")
        write_file_atomic(p, b"two")
        assert p.read_bytes() == b"two"
        assert os.listdir(tmp_path) == ["f.bin"]

    def test_atomic_missing_dir(self, tmp_path):
        with pytest.raises(OSError):
            write_file_atomic(tmp_path / "nope" / "f.bin", b"x")
