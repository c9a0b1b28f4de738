"""PLY, PGM and JSON file formats.

Writers return bytes; ``write_file_atomic`` puts them on disk through a
temporary file and a rename so a crashed run never leaves half a file.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import (
    BadDimensions,
    BadMagic,
    ParseError,
    Truncated,
    UnsupportedMaxval,
    ValidationError,
)
from .laser import as_gray_image
from .reconstruction import PointCloud

PLY_FORMATS = ("ascii", "binary_little_endian")

_PLY_TYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "char": "i1",
    "int8": "i1",
    "short": "<i2",
    "ushort": "<u2",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "uint32": "<u4",
}


def write_file_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# PLY


def _ply_header(n: int, fmt: str, colors: bool) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", "comment laserforge", f"element vertex {n}"]
    lines += [f"property float {c}" for c in "xyz"]
    if colors:
        lines += [f"property uchar {c}" for c in ("red", "green", "blue")]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_ply(cloud: PointCloud, format: str = "ascii") -> bytes:
    """Serialize a cloud as PLY.

    ASCII bodies carry one vertex per line with six decimals per
    coordinate (colors appended as integers); binary bodies pack
    little-endian float32 coordinates followed by the color bytes.
    """
    if format == "binary":
        format = "binary_little_endian"
    if format not in PLY_FORMATS:
        raise ValidationError(f"unknown PLY format {format!r}")
    pts = cloud.points
    colors = cloud.colors
    head = _ply_header(len(pts), format, colors is not None)
    if format == "ascii":
        if colors is None:
            body = "".join(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in pts.tolist())
        else:
            body = "".join(
                f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n"
                for (x, y, z), (r, g, b) in zip(pts.tolist(), colors.tolist())
            )
        return head + body.encode("ascii")
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    rec = np.zeros(len(pts), dtype=fields)
    for i, c in enumerate("xyz"):
        rec[c] = pts[:, i]
    if colors is not None:
        for i, c in enumerate(("red", "green", "blue")):
            rec[c] = colors[:, i]
    return head + rec.tobytes()


def read_ply(data: bytes) -> PointCloud:
    """Parse the vertex element of an ascii or little-endian binary PLY."""
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file")
    nl = data.find(b"\n", end)
    body = data[nl + 1 :] if nl >= 0 else b""
    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    for raw in data[:end].decode("ascii", "replace").splitlines()[1:]:
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element")
            if tok[1] == "list":
                raise ParseError("list properties are not supported")
            if tok[1] not in _PLY_TYPES:
                raise ParseError(f"unknown PLY type {tok[1]!r}")
            elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt not in PLY_FORMATS:
        raise ParseError(f"unsupported PLY format {fmt!r}")
    if not elements or elements[0][0] != "vertex":
        raise ParseError("first element must be 'vertex'")
    _, n, props = elements[0]
    names = [p for p, _ in props]
    if not {"x", "y", "z"} <= set(names):
        raise ParseError("vertex element lacks x, y, z")

    if fmt == "ascii":
        rows = body.decode("ascii").split("\n")
        rows = [r for r in rows if r.strip()][:n]
        if len(rows) < n:
            raise Truncated(f"expected {n} vertices, found {len(rows)}")
        table = np.array([r.split()[: len(names)] for r in rows], dtype=float).reshape(n, len(names))
        cols = {p: table[:, i] for i, p in enumerate(names)}
    else:
        dtype = np.dtype(props)
        if len(body) < n * dtype.itemsize:
            raise Truncated(f"expected {n * dtype.itemsize} bytes of vertex data, found {len(body)}")
        rec = np.frombuffer(body, dtype=dtype, count=n)
        cols = {p: rec[p] for p in names}

    pts = np.column_stack([cols[c].astype(float) for c in "xyz"]) if n else np.empty((0, 3))
    colors = None
    if {"red", "green", "blue"} <= set(names):
        colors = np.column_stack([cols[c] for c in ("red", "green", "blue")]).astype(np.uint8)
    return PointCloud(pts, colors)


# ---------------------------------------------------------------------------
# PGM


def write_pgm(img) -> bytes:
    img = as_gray_image(img)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` header tokens, skipping ``#`` comments; returns the offset after them."""
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise Truncated("PGM header ends early")
        if data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    return tokens, i


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) 8-bit PGM into a (height, width) uint8 array."""
    if data[:2] != b"P5":
        raise BadMagic(f"expected magic 'P5', got {data[:2]!r}")
    tokens, i = _pgm_tokens(data[2:], 3)
    i += 2
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise BadDimensions(f"unreadable PGM header values {tokens}") from exc
    if w < 1 or h < 1:
        raise BadDimensions(f"PGM dimensions must be positive, got {w}x{h}")
    if maxval != 255:
        raise UnsupportedMaxval(f"only maxval 255 is supported, got {maxval}")
    if i >= len(data) or not data[i : i + 1].isspace():
        raise Truncated("PGM header is not followed by whitespace")
    pixels = data[i + 1 : i + 1 + w * h]
    if len(pixels) < w * h:
        raise Truncated(f"expected {w * h} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


# ---------------------------------------------------------------------------
# JSON


def dumps_json(obj) -> bytes:
    # repr-based floats round-trip exactly
    return (json.dumps(obj, indent=2, allow_nan=False) + "\n").encode("utf-8")


def write_json(path, obj) -> None:
    write_file_atomic(path, dumps_json(obj))


def read_json(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
