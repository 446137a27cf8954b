"""Minimal PLY point-cloud reader and writer.

Supports ascii and binary little-endian files whose first element is
``vertex`` with float ``x, y, z`` properties, optional uchar ``red, green,
blue`` and an optional integer ``segment`` property. Unknown vertex
properties are skipped; elements after ``vertex`` are ignored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .model import StageCloud


class PlyError(ValueError):
    """Base for PLY format problems."""


class PlyFormatError(PlyError):
    """Malformed or unsupported header/body."""


class PlyMissingPropertyError(PlyError):
    """A required vertex property is absent."""


_PROPERTY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_SEGMENT_TYPES = ("i1", "u1", "i2", "u2", "i4", "u4")


@dataclass
class _Header:
    binary: bool
    vertex_count: int
    properties: list[tuple[str, str]]  # (name, numpy dtype code)
    data_offset: int


def _parse_header(raw: bytes) -> _Header:
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise PlyFormatError("not a PLY file (missing 'ply'/'end_header')")
    newline = raw.find(b"\n", end)
    if newline < 0:
        raise PlyFormatError("truncated header")
    try:
        lines = raw[:end].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise PlyFormatError("header is not ascii") from exc

    binary = False
    vertex_count = None
    properties: list[tuple[str, str]] = []
    in_vertex = False
    seen_element = False
    fmt_seen = False
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt_seen = True
            if parts[1] == "ascii":
                binary = False
            elif parts[1] == "binary_little_endian":
                binary = True
            elif parts[1] == "binary_big_endian":
                raise PlyFormatError("big-endian PLY is not supported")
            else:
                raise PlyFormatError(f"unknown format {parts[1]!r}")
        elif parts[0] == "element":
            if parts[1] == "vertex":
                if seen_element:
                    raise PlyFormatError("vertex must be the first element")
                try:
                    vertex_count = int(parts[2])
                except (IndexError, ValueError) as exc:
                    raise PlyFormatError("bad vertex element line") from exc
                in_vertex = True
            else:
                in_vertex = False
            seen_element = True
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise PlyFormatError("list properties on vertices are not supported")
            if len(parts) != 3 or parts[1] not in _PROPERTY_DTYPES:
                raise PlyFormatError(f"bad property line {line!r}")
            properties.append((parts[2], _PROPERTY_DTYPES[parts[1]]))
    if not fmt_seen:
        raise PlyFormatError("header has no format line")
    if vertex_count is None:
        raise PlyFormatError("header has no vertex element")
    return _Header(binary=binary, vertex_count=vertex_count,
                   properties=properties, data_offset=newline + 1)


def read_ply(path) -> StageCloud:
    """Read a PLY point cloud into a stage.

    Positions come from float ``x, y, z`` (meters); ``red, green, blue`` uchar
    columns become colors in [0, 1]; an integer ``segment`` column becomes
    superpoint ids.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    header = _parse_header(raw)
    names = [name for name, _ in header.properties]
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise PlyMissingPropertyError(f"missing coordinate property {coord!r}")

    if header.binary:
        dtype = np.dtype([(name, "<" + code) for name, code in header.properties])
        body = raw[header.data_offset:header.data_offset
                   + dtype.itemsize * header.vertex_count]
        if len(body) != dtype.itemsize * header.vertex_count:
            raise PlyFormatError("binary body shorter than vertex count")
        table = np.frombuffer(body, dtype=dtype)
    else:
        text = raw[header.data_offset:].decode("ascii", errors="replace").split()
        width = len(header.properties)
        needed = width * header.vertex_count
        if len(text) < needed:
            raise PlyFormatError("ascii body shorter than vertex count")
        try:
            flat = np.array(text[:needed], dtype=np.float64).reshape(
                header.vertex_count, width)
        except ValueError as exc:
            raise PlyFormatError("ascii body contains non-numeric values") from exc
        table = np.rec.fromarrays([flat[:, i] for i in range(width)],
                                  names=",".join(names))

    positions = np.stack([np.asarray(table["x"], dtype=np.float64),
                          np.asarray(table["y"], dtype=np.float64),
                          np.asarray(table["z"], dtype=np.float64)], axis=1)
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.stack([np.asarray(table[c], dtype=np.float64) / 255.0
                           for c in ("red", "green", "blue")], axis=1)
    segments = None
    if "segment" in names:
        segments = np.asarray(table["segment"], dtype=np.int64)
    return StageCloud(positions=positions, colors=colors, segment_ids=segments)


def write_ply(path, cloud: StageCloud, binary: bool = True) -> None:
    """Write a stage as PLY; binary little-endian by default.

    Positions are stored as float32, colors as uchar (rounded from [0, 1]),
    segments as int32. A binary file written here reads back byte-exactly.
    """
    n = cloud.point_count
    fields = [("x", "f4"), ("y", "f4"), ("z", "f4")]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if cloud.segment_ids is not None:
        fields += [("segment", "i4")]
    dtype = np.dtype([(name, "<" + code) for name, code in fields])
    table = np.zeros(n, dtype=dtype)
    table["x"] = cloud.positions[:, 0].astype(np.float32)
    table["y"] = cloud.positions[:, 1].astype(np.float32)
    table["z"] = cloud.positions[:, 2].astype(np.float32)
    if cloud.colors is not None:
        rgb = np.clip(np.rint(cloud.colors * 255.0), 0, 255).astype(np.uint8)
        table["red"], table["green"], table["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    if cloud.segment_ids is not None:
        table["segment"] = cloud.segment_ids.astype(np.int32)

    type_names = {"f4": "float", "u1": "uchar", "i4": "int"}
    header_lines = ["ply",
                    "format binary_little_endian 1.0" if binary else "format ascii 1.0",
                    f"element vertex {n}"]
    header_lines += [f"property {type_names[code]} {name}" for name, code in fields]
    header_lines.append("end_header")
    header = ("\n".join(header_lines) + "\n").encode("ascii")

    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(table.tobytes())
        else:
            for row in table:
                cols = []
                for name, code in fields:
                    value = row[name]
                    cols.append(f"{float(value):.8g}" if code == "f4"
                                else str(int(value)))
                fh.write((" ".join(cols) + "\n").encode("ascii"))
