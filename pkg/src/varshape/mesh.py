"""Triangle meshes, polyline shape graphs and grayscale images.

Meshes are plain (vertices, faces) arrays in 64-bit floats. Face winding is
counter-clockwise seen from outside; the cross product of the edge vectors
defines the outward normal. All operations here are pure: they return new
objects and never mutate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEdge, DegenerateFace, EmptyImage

# Cells with measure below this are treated as degenerate and skipped when
# building measures.
DEGENERACY_EPS = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh: ``vertices`` (n, 3) float array, ``faces`` (m, 3) int array.

    Face indices must be in range and vertex coordinates finite; both are
    checked at construction. Winding consistency is checked at ingestion
    (see :func:`varshape.meshio.load_mesh`) and by :func:`has_consistent_winding`,
    not here, so that perturbation ops can build intermediate meshes freely.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


@dataclass(frozen=True)
class PolylineGraph:
    """Shape graph: ``vertices`` (n, d) float array with d in {2, 3}, ``edges`` (m, 2) int array."""

    vertices: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise ValueError("vertices must be (n, 2) or (n, 3)")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if e.size and (e.min() < 0 or e.max() >= len(v)):
            raise ValueError("edge index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", e)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


@dataclass(frozen=True)
class GrayImage:
    """Grayscale image with row-major ``pixels`` in [0, 255], shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64).reshape(self.height, self.width)
        if p.min() < 0 or p.max() > 255:
            raise ValueError("pixel intensities must lie in [0, 255]")
        object.__setattr__(self, "pixels", p)


# ---------------------------------------------------------------------------
# per-cell geometry


def triangle_geometry(mesh: TriMesh, face_index: int):
    """Center of mass, unit normal and area of one triangle.

    Returns
    -------
    (center, normal, area)
        center is the vertex mean, normal the normalized cross product of
        the edge vectors (so winding order fixes its sign), area half the
        cross-product magnitude.

    Raises
    ------
    DegenerateFace
        If the area is below ``DEGENERACY_EPS``.
    """
    a, b, c = mesh.vertices[mesh.faces[face_index]]
    cross = np.cross(b - a, c - a)
    norm = np.linalg.norm(cross)
    area = 0.5 * norm
    if area < DEGENERACY_EPS:
        raise DegenerateFace(f"face {face_index} has area {area:.3e}")
    return (a + b + c) / 3.0, cross / norm, area


def all_triangle_geometry(mesh: TriMesh):
    """Vectorized triangle geometry over all faces.

    Returns
    -------
    (centers, normals, areas, valid)
        Arrays over every face; ``valid`` flags faces with area above the
        degeneracy cutoff. Normals of invalid faces are zero-filled.
    """
    v = mesh.vertices
    f = mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cross = np.cross(b - a, c - a)
    norms = np.linalg.norm(cross, axis=1)
    areas = 0.5 * norms
    valid = areas >= DEGENERACY_EPS
    normals = np.zeros_like(cross)
    normals[valid] = cross[valid] / norms[valid, None]
    centers = (a + b + c) / 3.0
    return centers, normals, areas, valid


def segment_geometry(graph: PolylineGraph, edge_index: int):
    """Midpoint, unit tangent (in stored edge order) and length of one edge.

    Raises
    ------
    DegenerateEdge
        If the length is below ``DEGENERACY_EPS``.
    """
    p, q = graph.vertices[graph.edges[edge_index]]
    d = q - p
    length = np.linalg.norm(d)
    if length < DEGENERACY_EPS:
        raise DegenerateEdge(f"edge {edge_index} has length {length:.3e}")
    return (p + q) / 2.0, d / length, length


def all_segment_geometry(graph: PolylineGraph):
    """Vectorized segment geometry; returns (centers, tangents, lengths, valid)."""
    p = graph.vertices[graph.edges[:, 0]]
    q = graph.vertices[graph.edges[:, 1]]
    d = q - p
    lengths = np.linalg.norm(d, axis=1)
    valid = lengths >= DEGENERACY_EPS
    tangents = np.zeros_like(d)
    tangents[valid] = d[valid] / lengths[valid, None]
    return (p + q) / 2.0, tangents, lengths, valid


def face_diameters(mesh: TriMesh) -> np.ndarray:
    """Diameter (longest edge) of every face."""
    v = mesh.vertices
    f = mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    e = np.stack([
        np.linalg.norm(b - a, axis=1),
        np.linalg.norm(c - b, axis=1),
        np.linalg.norm(a - c, axis=1),
    ])
    return e.max(axis=0)


def total_area(mesh: TriMesh) -> float:
    return float(all_triangle_geometry(mesh)[2].sum())


# ---------------------------------------------------------------------------
# structural checks


def _directed_edges(faces: np.ndarray) -> np.ndarray:
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def has_consistent_winding(mesh: TriMesh) -> bool:
    """Shared-edge opposite-orientation rule: no directed edge appears twice."""
    de = _directed_edges(mesh.faces)
    return len(np.unique(de, axis=0)) == len(de)


def is_closed(mesh: TriMesh) -> bool:
    """True when every undirected edge borders exactly 2 faces, with opposite orientation."""
    if not has_consistent_winding(mesh):
        return False
    de = _directed_edges(mesh.faces)
    und = np.sort(de, axis=1)
    _, counts = np.unique(und, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def signed_volume(mesh: TriMesh) -> float:
    """Signed enclosed volume; positive for a closed, outward-wound mesh."""
    v = mesh.vertices
    f = mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


# ---------------------------------------------------------------------------
# rigid and combinatorial transforms


def rotate_mesh(mesh: TriMesh, rotation: np.ndarray) -> TriMesh:
    """Apply a rotation matrix to every vertex; faces are unchanged."""
    rotation = np.asarray(rotation, dtype=np.float64)
    return TriMesh(mesh.vertices @ rotation.T, mesh.faces.copy())


def translate_mesh(mesh: TriMesh, offset) -> TriMesh:
    return TriMesh(mesh.vertices + np.asarray(offset, dtype=np.float64), mesh.faces.copy())


def scale_mesh(mesh: TriMesh, factor: float) -> TriMesh:
    """Uniform scaling about the origin. Areas scale by factor**2."""
    return TriMesh(mesh.vertices * float(factor), mesh.faces.copy())


def permute_mesh(mesh: TriMesh, seed=None) -> TriMesh:
    """Reindex vertices and reorder faces by random permutations.

    The geometric surface, the winding and each face's internal vertex order
    are preserved, so the multiset of triangle_geometry outputs is unchanged
    bit for bit. ``seed=None`` applies identity permutations.
    """
    if seed is None:
        return TriMesh(mesh.vertices.copy(), mesh.faces.copy())
    rng = np.random.default_rng(seed)
    vperm = rng.permutation(mesh.n_vertices)
    fperm = rng.permutation(mesh.n_faces)
    new_vertices = np.empty_like(mesh.vertices)
    new_vertices[vperm] = mesh.vertices
    new_faces = vperm[mesh.faces][fperm]
    return TriMesh(new_vertices, new_faces)


def subdivide_midpoint(mesh: TriMesh) -> TriMesh:
    """Split every triangle 1:4 at its edge midpoints.

    Midpoints are shared across adjacent faces, so a closed mesh stays
    closed. The point set (and thus total area) is unchanged.
    """
    vertices = list(mesh.vertices)
    midpoint_index: dict[tuple[int, int], int] = {}

    def midpoint(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        idx = midpoint_index.get(key)
        if idx is None:
            idx = len(vertices)
            vertices.append(0.5 * (mesh.vertices[i] + mesh.vertices[j]))
            midpoint_index[key] = idx
        return idx

    faces = []
    for a, b, c in mesh.faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        faces.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return TriMesh(np.array(vertices), np.array(faces, dtype=np.int64))


def remove_faces(mesh: TriMesh, fraction: float, seed) -> TriMesh:
    """Delete a uniformly random ``floor(fraction * n_faces)`` subset of faces.

    Vertices and the relative order of the surviving faces are retained, so
    the resulting measure nests inside the original one.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    k = int(fraction * mesh.n_faces)
    if k == 0:
        return TriMesh(mesh.vertices.copy(), mesh.faces.copy())
    rng = np.random.default_rng(seed)
    removed = rng.choice(mesh.n_faces, size=k, replace=False)
    keep = np.setdiff1d(np.arange(mesh.n_faces), removed)
    return TriMesh(mesh.vertices.copy(), mesh.faces[keep])


# ---------------------------------------------------------------------------
# decimation


def _cluster_decimate(mesh: TriMesh, cell: float) -> tuple[np.ndarray, np.ndarray]:
    """Vertex clustering on a uniform grid with the given cell size."""
    v = mesh.vertices
    lo = v.min(axis=0)
    ids = np.floor((v - lo) / cell).astype(np.int64)
    # dense relabeling of occupied cells
    _, labels = np.unique(ids, axis=0, return_inverse=True)
    n_clusters = labels.max() + 1
    reps = np.zeros((n_clusters, 3))
    counts = np.bincount(labels, minlength=n_clusters).astype(np.float64)
    for k in range(3):
        reps[:, k] = np.bincount(labels, weights=v[:, k], minlength=n_clusters) / counts
    faces = labels[mesh.faces]
    # drop collapsed faces (repeated cluster) and duplicates of the same cluster triple
    distinct = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 2] != faces[:, 0])
    )
    faces = faces[distinct]
    if len(faces):
        _, first = np.unique(np.sort(faces, axis=1), axis=0, return_index=True)
        faces = faces[np.sort(first)]
        # drop geometrically degenerate faces
        a, b, c = reps[faces[:, 0]], reps[faces[:, 1]], reps[faces[:, 2]]
        areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        faces = faces[areas >= DEGENERACY_EPS]
    return reps, faces


def decimate_cluster(mesh: TriMesh, ratio: float) -> TriMesh:
    """Vertex-clustering decimation targeting ``ratio * n_faces`` faces.

    The grid cell size is found by bisection; the search stops once the face
    count lands within 10% of the target and otherwise returns the closest
    size seen. ``ratio == 1`` returns the mesh unchanged.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    if ratio == 1 or mesh.n_faces == 0:
        return TriMesh(mesh.vertices.copy(), mesh.faces.copy())
    target = ratio * mesh.n_faces
    extent = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    diag = float(np.linalg.norm(extent))
    if diag == 0:
        return TriMesh(mesh.vertices.copy(), mesh.faces.copy())
    lo, hi = diag * 1e-6, diag  # count(lo) ~ n_faces, count(hi) ~ 0
    best = None
    best_err = np.inf
    for _ in range(60):
        cell = 0.5 * (lo + hi)
        reps, faces = _cluster_decimate(mesh, cell)
        err = abs(len(faces) - target)
        if err < best_err:
            best, best_err = (reps, faces), err
        if err <= 0.1 * target:
            break
        if len(faces) > target:
            lo = cell
        else:
            hi = cell
    reps, faces = best
    # drop vertices unused by any surviving face
    used = np.unique(faces) if len(faces) else np.array([], dtype=np.int64)
    remap = np.full(len(reps), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(reps[used], remap[faces] if len(faces) else faces)


# ---------------------------------------------------------------------------
# heightmap extrusion


def _resolve_pinches(active: np.ndarray) -> np.ndarray:
    """Activate extra cells until no two active cells touch only diagonally.

    A diagonal-only contact would put 4 wall triangles on one vertical edge,
    breaking the two-faces-per-edge invariant of the extrusion.
    """
    active = active.copy()
    while True:
        a = active
        # cell (i, j) vs (i+1, j+1) touching only at a corner
        pinch_a = a[:-1, :-1] & a[1:, 1:] & ~a[1:, :-1] & ~a[:-1, 1:]
        # cell (i+1, j) vs (i, j+1)
        pinch_b = a[1:, :-1] & a[:-1, 1:] & ~a[:-1, :-1] & ~a[1:, 1:]
        if not (pinch_a.any() or pinch_b.any()):
            return active
        fill = np.zeros_like(active)
        fill[1:, :-1] |= pinch_a
        fill[:-1, :-1] |= pinch_b
        active |= fill


def heightmap_to_closed_mesh(img: GrayImage, height_scale: float, base_threshold: float) -> TriMesh:
    """Extrude a grayscale image into a closed surface mesh.

    The top sheet is the heightmap z = height_scale * intensity / 255 over
    the pixel grid (one vertex per pixel, two triangles per grid cell,
    restricted to cells with at least one corner above ``base_threshold``);
    the bottom sheet mirrors it at z = 0 and side walls close the boundary.
    The grid is centered on the image center, x increasing with columns and
    y with upward rows. All faces are wound outward.

    Raises
    ------
    EmptyImage
        If no pixel exceeds ``base_threshold`` (on the 0..255 scale).
    """
    z = height_scale * img.pixels / 255.0
    above = img.pixels > base_threshold
    if not above.any():
        raise EmptyImage("no pixel above threshold")
    # active grid cells: any of the 4 corner pixels above threshold
    active = above[:-1, :-1] | above[:-1, 1:] | above[1:, :-1] | above[1:, 1:]
    if not active.any():
        raise EmptyImage("image too small to form a cell")
    active = _resolve_pinches(active)

    h, w = img.height, img.width
    # vertex grid in mesh coordinates: x = col - cx, y = cy - row (upright image)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    xs, ys = cols - cx, cy - rows

    used = np.zeros((h, w), dtype=bool)
    used[:-1, :-1] |= active
    used[:-1, 1:] |= active
    used[1:, :-1] |= active
    used[1:, 1:] |= active
    top_id = np.full((h, w), -1, dtype=np.int64)
    bot_id = np.full((h, w), -1, dtype=np.int64)
    n_used = int(used.sum())
    top_id[used] = np.arange(n_used)
    bot_id[used] = np.arange(n_used, 2 * n_used)
    vertices = np.concatenate([
        np.column_stack([xs[used], ys[used], z[used]]),
        np.column_stack([xs[used], ys[used], np.zeros(n_used)]),
    ])

    faces = []
    ai, aj = np.nonzero(active)
    for r, c in zip(ai, aj):
        # corners of cell (r, c): nw=(r,c) ne=(r,c+1) sw=(r+1,c) se=(r+1,c+1)
        nw, ne, sw, se = top_id[r, c], top_id[r, c + 1], top_id[r + 1, c], top_id[r + 1, c + 1]
        # top: counter-clockwise seen from +z (y decreases with row)
        faces.append((nw, sw, ne))
        faces.append((ne, sw, se))
        bnw, bne, bsw, bse = bot_id[r, c], bot_id[r, c + 1], bot_id[r + 1, c], bot_id[r + 1, c + 1]
        faces.append((bnw, bne, bsw))
        faces.append((bne, bse, bsw))

    # walls along boundary edges of the active region; the edge is directed
    # with the active cell on its right (seen from +z), which makes the quad
    # (a_top, b_top, b_bot, a_bot) outward-wound
    def wall(a_r, a_c, b_r, b_c):
        at, bt = top_id[a_r, a_c], top_id[b_r, b_c]
        ab, bb = bot_id[a_r, a_c], bot_id[b_r, b_c]
        faces.append((at, bt, bb))
        faces.append((at, bb, ab))

    pad = np.zeros((active.shape[0] + 2, active.shape[1] + 2), dtype=bool)
    pad[1:-1, 1:-1] = active
    for r, c in zip(ai, aj):
        pr, pc = r + 1, c + 1
        if not pad[pr - 1, pc]:  # upper edge (in xy), cell below it
            wall(r, c, r, c + 1)
        if not pad[pr + 1, pc]:  # lower edge
            wall(r + 1, c + 1, r + 1, c)
        if not pad[pr, pc - 1]:  # left edge
            wall(r + 1, c, r, c)
        if not pad[pr, pc + 1]:  # right edge
            wall(r, c + 1, r + 1, c + 1)

    return TriMesh(vertices, np.array(faces, dtype=np.int64))
