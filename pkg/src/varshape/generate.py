"""Parametric closed-surface generators used as dataset substitutes.

All generators return consistently wound, closed TriMesh objects and are
deterministic per seed. ``blob`` and ``bumped_box`` are rotationally
asymmetric so that an applied rotation is identifiable from the shape.
"""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def _uv_sphere(resolution: int, radius_fn) -> TriMesh:
    """Closed UV sphere with per-direction radius; outward winding.

    ``resolution`` latitude stacks, twice that many longitude slices.
    """
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    stacks, slices = resolution, 2 * resolution
    dirs = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, stacks):
        theta = np.pi * i / stacks
        for j in range(slices):
            phi = 2 * np.pi * j / slices
            dirs.append(np.array([
                np.sin(theta) * np.cos(phi),
                np.sin(theta) * np.sin(phi),
                np.cos(theta),
            ]))
    dirs.append(np.array([0.0, 0.0, -1.0]))
    dirs = np.array(dirs)
    vertices = radius_fn(dirs)[:, None] * dirs

    def ring(i: int, j: int) -> int:
        return 1 + (i - 1) * slices + (j % slices)

    south = len(dirs) - 1
    faces = []
    for j in range(slices):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, stacks - 1):
        for j in range(slices):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j + 1), ring(i + 1, j)
            faces.append((a, d, c))
            faces.append((a, c, b))
    for j in range(slices):
        faces.append((south, ring(stacks - 1, j + 1), ring(stacks - 1, j)))
    return TriMesh(vertices, np.array(faces, dtype=np.int64))


def ellipsoid(a: float = 1.0, b: float = 1.0, c: float = 1.0, resolution: int = 16) -> TriMesh:
    mesh = _uv_sphere(resolution, lambda d: np.ones(len(d)))
    return TriMesh(mesh.vertices * np.array([a, b, c]), mesh.faces)


def torus(major: float = 1.0, minor: float = 0.4, resolution: int = 16) -> TriMesh:
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    m, k = 2 * resolution, resolution
    u = 2 * np.pi * np.arange(m) / m
    w = 2 * np.pi * np.arange(k) / k
    uu, ww = np.meshgrid(u, w, indexing="ij")
    vertices = np.column_stack([
        ((major + minor * np.cos(ww)) * np.cos(uu)).ravel(),
        ((major + minor * np.cos(ww)) * np.sin(uu)).ravel(),
        (minor * np.sin(ww)).ravel(),
    ])

    def vid(i: int, j: int) -> int:
        return (i % m) * k + (j % k)

    faces = []
    for i in range(m):
        for j in range(k):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(vertices, np.array(faces, dtype=np.int64))


def bumped_box(
    lx: float = 1.0,
    ly: float = 0.7,
    lz: float = 0.5,
    bump: float = 0.25,
    resolution: int = 8,
) -> TriMesh:
    """Box with unequal sides and a smooth radial bump near one corner."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    half = np.array([lx, ly, lz]) / 2.0
    # (fixed axis, sign, u axis, v axis) with u x v pointing outward
    specs = [
        (0, +1, 1, 2), (0, -1, 2, 1),
        (1, +1, 2, 0), (1, -1, 0, 2),
        (2, +1, 0, 1), (2, -1, 1, 0),
    ]
    index: dict[tuple, int] = {}
    vertices: list[np.ndarray] = []
    faces = []

    def vid(p: np.ndarray) -> int:
        key = tuple(p)
        i = index.get(key)
        if i is None:
            i = len(vertices)
            vertices.append(p)
            index[key] = i
        return i

    for axis, sign, ua, va in specs:
        us = np.linspace(-half[ua], half[ua], resolution + 1)
        vs = np.linspace(-half[va], half[va], resolution + 1)
        grid = np.empty((resolution + 1, resolution + 1), dtype=np.int64)
        for i, uval in enumerate(us):
            for j, vval in enumerate(vs):
                p = np.zeros(3)
                p[axis] = sign * half[axis]
                p[ua], p[va] = uval, vval
                grid[i, j] = vid(p)
        for i in range(resolution):
            for j in range(resolution):
                a, b = grid[i, j], grid[i + 1, j]
                c, d = grid[i + 1, j + 1], grid[i, j + 1]
                faces.append((a, b, c))
                faces.append((a, c, d))

    pts = np.array(vertices)
    center = 0.8 * half
    sigma = 0.5 * float(half.max())
    scale = 1.0 + bump * np.exp(-np.sum((pts - center) ** 2, axis=1) / (2 * sigma**2))
    return TriMesh(pts * scale[:, None], np.array(faces, dtype=np.int64))


def blob(
    resolution: int = 12,
    seed=0,
    n_bumps: int = 6,
    stretch: tuple[float, float, float] = (1.8, 1.0, 0.6),
) -> TriMesh:
    """Stretched sphere with random outward bumps.

    The unequal principal axes plus the bumps make every rotation of the
    shape distinguishable, which the rotation-regression experiments need.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    amps = rng.uniform(0.08, 0.35, size=n_bumps)
    widths = rng.uniform(0.25, 0.5, size=n_bumps)

    def radius(dirs: np.ndarray) -> np.ndarray:
        # exp(-|u - d|^2 / (2 s^2)) = exp((<u, d> - 1) / s^2) on the sphere
        dots = dirs @ centers.T
        return 1.0 + (amps * np.exp((dots - 1.0) / widths**2)).sum(axis=1)

    mesh = _uv_sphere(resolution, radius)
    return TriMesh(mesh.vertices * np.asarray(stretch, dtype=np.float64), mesh.faces)


def generate_synthetic_shape(kind: str, params: dict | None = None, resolution: int = 16, seed=0) -> TriMesh:
    """Dispatch on ``kind`` in {ellipsoid, torus, bumped_box, blob}."""
    params = dict(params or {})
    if kind == "ellipsoid":
        return ellipsoid(resolution=resolution, **params)
    if kind == "torus":
        return torus(resolution=resolution, **params)
    if kind == "bumped_box":
        return bumped_box(resolution=max(1, resolution // 2), **params)
    if kind == "blob":
        return blob(resolution=resolution, seed=seed, **params)
    raise ValueError(f"unknown shape kind {kind!r}")
