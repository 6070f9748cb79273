"""OBJ and OFF triangle mesh reading and writing.

OBJ: ``v x y z`` and ``f i j k [l ...]`` records with 1-based indices;
``#`` comments and other record types are skipped; ``i/t/n`` face entries
are accepted and reduced to the vertex index. OFF: standard header with
0-based indices. Polygons with more than 3 vertices are fan-triangulated.
Files are text, decimal points locale-independent.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import ParseError, UnsupportedFormat
from .mesh import TriMesh, has_consistent_winding


def _fan(indices: list[int]) -> list[tuple[int, int, int]]:
    return [(indices[0], indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def _parse_obj(lines) -> TriMesh:
    vertices = []
    faces = []
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"line {ln}: vertex needs 3 coordinates")
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise ParseError(f"line {ln}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            if len(parts) < 4:
                raise ParseError(f"line {ln}: face needs at least 3 indices")
            try:
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"line {ln}: bad face index") from exc
            if any(i < 0 for i in idx):
                raise ParseError(f"line {ln}: face index out of range")
            faces.extend(_fan(idx))
        # every other record type (vn, vt, o, g, s, usemtl, ...) is ignored
    return _build(vertices, faces)


def _parse_off(lines) -> TriMesh:
    tokens: list[str] = []
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ParseError("missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
    except (IndexError, ValueError) as exc:
        raise ParseError("bad OFF counts") from exc
    pos = 4  # skip edge count
    try:
        vertices = []
        for _ in range(nv):
            vertices.append([float(t) for t in tokens[pos:pos + 3]])
            pos += 3
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            idx = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
            if len(idx) != k or k < 3:
                raise ParseError("bad face record")
            faces.extend(_fan(idx))
            pos += 1 + k
    except (IndexError, ValueError) as exc:
        raise ParseError("truncated OFF body") from exc
    if any(len(v) != 3 for v in vertices):
        raise ParseError("truncated OFF body")
    return _build(vertices, faces)


def _build(vertices, faces) -> TriMesh:
    v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise ParseError("face index out of range")
    if not np.all(np.isfinite(v)):
        raise ParseError("non-finite vertex coordinate")
    mesh = TriMesh(v, f)
    if not has_consistent_winding(mesh):
        raise ParseError("inconsistent face winding (shared edge traversed twice in the same direction)")
    return mesh


def load_mesh(path, format: str | None = None) -> TriMesh:
    """Load a triangle mesh, inferring the format from the extension if not given.

    Raises
    ------
    UnsupportedFormat
        For anything but ``obj`` / ``off``.
    ParseError
        On malformed content, out-of-range indices or inconsistent winding.
    """
    if format is None:
        format = os.path.splitext(str(path))[1].lstrip(".").lower()
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if format == "obj":
        return _parse_obj(lines)
    if format == "off":
        return _parse_off(lines)
    raise UnsupportedFormat(f"unknown mesh format {format!r}")


def save_mesh(mesh: TriMesh, path, format: str | None = None) -> None:
    """Write a mesh as OBJ or OFF (format inferred from the extension)."""
    if format is None:
        format = os.path.splitext(str(path))[1].lstrip(".").lower()
    if format == "obj":
        with open(path, "w", encoding="utf-8") as fh:
            for v in mesh.vertices:
                fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
            for f in mesh.faces:
                fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    elif format == "off":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("OFF\n")
            fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
            for v in mesh.vertices:
                fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    else:
        raise UnsupportedFormat(f"unknown mesh format {format!r}")
