"""Dataset plumbing: IDX image files, procedural digit rendering, manifests.

The digit renderer draws stroke skeletons per class with randomized affine
jitter and rasterizes a distance field, giving a deterministic desk-scale
stand-in for scanned digit images. Real IDX image/label files are ingested
through the same heightmap-extrusion path.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import BadMagic, TruncatedFile
from .generate import generate_synthetic_shape
from .mesh import GrayImage, TriMesh, heightmap_to_closed_mesh, rotate_mesh, scale_mesh
from .meshio import load_mesh, save_mesh
from .rotation import axis_rotation, random_rotation
from .train import LabeledDataset
from .varifold import from_mesh

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Positions are divided by this before training so sigmoid units see O(1)
# inputs; recorded in manifests and checkpoint meta.
DIGIT_COORD_SCALE = 1.0 / 14.0
DIGIT_HEIGHT_SCALE = 5.0
DIGIT_THRESHOLD = 16.0


# ---------------------------------------------------------------------------
# IDX files


def read_idx_images(path, count: int | None = None) -> list[GrayImage]:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise TruncatedFile("IDX image header truncated")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"expected magic {IDX_IMAGES_MAGIC:#010x}, got {magic:#010x}")
        if count is None:
            count = n
        if count > n:
            raise ValueError(f"requested {count} images, file holds {n}")
        data = fh.read(count * rows * cols)
    if len(data) < count * rows * cols:
        raise TruncatedFile("IDX image body truncated")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)
    return [GrayImage(cols, rows, img.astype(np.float64)) for img in raw]


def read_idx_labels(path, count: int | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise TruncatedFile("IDX label header truncated")
        magic, n = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise BadMagic(f"expected magic {IDX_LABELS_MAGIC:#010x}, got {magic:#010x}")
        if count is None:
            count = n
        if count > n:
            raise ValueError(f"requested {count} labels, file holds {n}")
        data = fh.read(count)
    if len(data) < count:
        raise TruncatedFile("IDX label body truncated")
    return np.frombuffer(data, dtype=np.uint8).astype(np.int64)


def write_idx_images(images: list[GrayImage], path) -> None:
    rows, cols = images[0].height, images[0].width
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(images), rows, cols))
        for img in images:
            fh.write(np.clip(np.round(img.pixels), 0, 255).astype(np.uint8).tobytes())


def write_idx_labels(labels, path) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# procedural digit images


def _bezier(p0, p1, p2, n=12):
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2))
    return (1 - t) ** 2 * p0 + 2 * t * (1 - t) * p1 + t**2 * p2


def _ellipse(cx, cy, rx, ry, n=24):
    t = np.linspace(0.0, 2 * np.pi, n + 1)
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


def _digit_skeleton(digit: int) -> list[np.ndarray]:
    if digit == 0:
        return [_ellipse(0.5, 0.5, 0.24, 0.36)]
    if digit == 1:
        return [np.array([[0.38, 0.70], [0.55, 0.88], [0.55, 0.12]])]
    if digit == 2:
        return [np.concatenate([
            _bezier([0.28, 0.68], [0.50, 1.02], [0.72, 0.66]),
            _bezier([0.72, 0.66], [0.70, 0.36], [0.28, 0.12])[1:],
            np.array([[0.74, 0.12]]),
        ])]
    if digit == 3:
        return [np.concatenate([
            _bezier([0.30, 0.86], [0.78, 0.94], [0.52, 0.52]),
            _bezier([0.52, 0.52], [0.88, 0.44], [0.30, 0.10])[1:],
        ])]
    if digit == 4:
        return [
            np.array([[0.66, 0.88], [0.28, 0.40], [0.80, 0.40]]),
            np.array([[0.64, 0.60], [0.64, 0.10]]),
        ]
    if digit == 5:
        return [np.concatenate([
            np.array([[0.74, 0.88], [0.32, 0.88], [0.30, 0.56]]),
            _bezier([0.30, 0.56], [0.80, 0.60], [0.72, 0.33])[1:],
            _bezier([0.72, 0.33], [0.66, 0.06], [0.28, 0.14])[1:],
        ])]
    if digit == 6:
        return [
            _bezier([0.66, 0.90], [0.32, 0.76], [0.33, 0.42], n=14),
            _ellipse(0.48, 0.29, 0.17, 0.17),
        ]
    if digit == 7:
        return [np.array([[0.26, 0.86], [0.76, 0.86], [0.45, 0.10]])]
    if digit == 8:
        return [_ellipse(0.50, 0.67, 0.16, 0.16), _ellipse(0.50, 0.30, 0.20, 0.19)]
    if digit == 9:
        return [
            _ellipse(0.53, 0.66, 0.18, 0.17),
            np.array([[0.71, 0.66], [0.66, 0.30], [0.55, 0.10]]),
        ]
    raise ValueError(f"digit must be 0..9, got {digit}")


def digit_image(digit: int, rng, size: int = 28) -> GrayImage:
    """Rasterize a jittered stroke skeleton of the digit onto a size x size grid."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    angle = rng.uniform(-0.22, 0.22)
    sx, sy = rng.uniform(0.72, 1.05, size=2)
    shift = rng.uniform(-0.09, 0.09, size=2)
    thickness = rng.uniform(0.036, 0.058)
    aa = 0.025
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])

    segments = []
    for line in _digit_skeleton(digit):
        pts = line + rng.normal(0.0, 0.012, size=line.shape)
        pts = (pts - 0.5) @ np.diag([sx, sy]) @ rot.T + 0.5 + shift
        segments.append(np.stack([pts[:-1], pts[1:]], axis=1))
    segs = np.concatenate(segments)  # (S, 2, 2)

    cols, rows = np.meshgrid(np.arange(size), np.arange(size))
    px = (cols.ravel() + 0.5) / size
    py = (size - rows.ravel() - 0.5) / size
    p = np.column_stack([px, py])  # (P, 2)

    a, b = segs[:, 0], segs[:, 1]  # (S, 2)
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-12)
    # projection parameter of every pixel onto every segment
    t = np.clip(((p[:, None, :] - a) * ab).sum(axis=2) / denom, 0.0, 1.0)
    closest = a + t[:, :, None] * ab
    dist = np.linalg.norm(p[:, None, :] - closest, axis=2).min(axis=1)
    intensity = 255.0 * np.clip((thickness + aa - dist) / aa, 0.0, 1.0)
    return GrayImage(size, size, intensity.reshape(size, size))


def make_digit_images(n: int, seed) -> tuple[list[GrayImage], np.ndarray]:
    """n jittered digit images with balanced labels (i-th label is i mod 10)."""
    images, labels = [], []
    for i in range(n):
        digit = i % 10
        images.append(digit_image(digit, np.random.default_rng([seed, i])))
        labels.append(digit)
    return images, np.array(labels, dtype=np.int64)


def digit_mesh_dataset(
    n: int,
    seed,
    height_scale: float = DIGIT_HEIGHT_SCALE,
    threshold: float = DIGIT_THRESHOLD,
    coord_scale: float = DIGIT_COORD_SCALE,
) -> LabeledDataset:
    """Closed digit surfaces with class labels, positions scaled by coord_scale."""
    images, labels = make_digit_images(n, seed)
    meshes = [
        scale_mesh(heightmap_to_closed_mesh(img, height_scale, threshold), coord_scale)
        for img in images
    ]
    measures = [from_mesh(m) for m in meshes]
    return LabeledDataset(measures, list(labels), "class", "varifold", meshes)


# ---------------------------------------------------------------------------
# synthetic rotation datasets


def rotation_angle_dataset(
    n: int,
    seed,
    kind: str = "blob",
    resolution: int = 10,
    axis: str = "z",
    angle_range: tuple[float, float] = (0.0, 2 * np.pi),
) -> LabeledDataset:
    """Copies of one base shape rotated about a fixed axis; scalar radian labels.

    Angles are sampled uniformly on ``angle_range``. With the full circle the
    label jumps from 2pi back to 0 between identical shapes, which no
    functional continuous in the measure can follow; regression studies that
    need a clean target should leave a margin (e.g. (0, 0.9 * 2pi)).
    """
    base = generate_synthetic_shape(kind, resolution=resolution, seed=seed)
    rng = np.random.default_rng([seed, 1])
    angles = rng.uniform(angle_range[0], angle_range[1], size=n)
    meshes = [rotate_mesh(base, axis_rotation(axis, t)) for t in angles]
    return LabeledDataset([from_mesh(m) for m in meshes], list(angles), "angle", "varifold", meshes)


def rotation_matrix_dataset(
    n: int, seed, kind: str = "blob", resolution: int = 10
) -> LabeledDataset:
    """Copies of one base shape under Haar-random rotations; labels are flattened matrices."""
    base = generate_synthetic_shape(kind, resolution=resolution, seed=seed)
    rotations = [random_rotation([seed, 1, i]) for i in range(n)]
    meshes = [rotate_mesh(base, r) for r in rotations]
    labels = [r.ravel().copy() for r in rotations]
    return LabeledDataset([from_mesh(m) for m in meshes], labels, "rotation9", "varifold", meshes)


# ---------------------------------------------------------------------------
# on-disk datasets (manifest + mesh files)


def write_manifest(out_dir, entries, label_kind: str, params: dict) -> str:
    """entries: (filename, label) pairs with filenames relative to out_dir."""
    manifest = {
        "label_kind": label_kind,
        "params": params,
        "items": [
            {"path": name, "label": label.tolist() if isinstance(label, np.ndarray) else label}
            for name, label in entries
        ],
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def load_manifest(manifest_path) -> dict:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dataset_from_manifest(manifest_path, representation: str = "varifold") -> LabeledDataset:
    """Load meshes listed in a manifest, apply its coord_scale, build measures."""
    manifest = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    scale = float(manifest.get("params", {}).get("coord_scale", 1.0))
    kind = manifest["label_kind"]
    meshes, labels = [], []
    for item in manifest["items"]:
        mesh = load_mesh(os.path.join(base, item["path"]))
        if scale != 1.0:
            mesh = scale_mesh(mesh, scale)
        meshes.append(mesh)
        label = item["label"]
        if kind == "rotation9":
            label = np.asarray(label, dtype=np.float64)
        elif kind == "class":
            label = int(label)
        else:
            label = float(label)
        labels.append(label)
    return LabeledDataset([from_mesh(m) for m in meshes], labels, kind, representation, meshes)


def ingest_mnist(
    images_path,
    labels_path,
    count: int,
    height_scale: float,
    threshold: float,
    out_dir,
    coord_scale: float = DIGIT_COORD_SCALE,
) -> str:
    """Convert IDX digit images to closed OFF meshes plus a manifest.

    Meshes are written in raw pixel units; ``coord_scale`` is recorded in the
    manifest and applied when the dataset is loaded for training.
    """
    images = read_idx_images(images_path, count)
    labels = read_idx_labels(labels_path, count)
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, (img, label) in enumerate(zip(images, labels)):
        mesh = heightmap_to_closed_mesh(img, height_scale, threshold)
        name = f"digit_{i:05d}.off"
        save_mesh(mesh, os.path.join(out_dir, name))
        entries.append((name, int(label)))
    params = {
        "height_scale": height_scale,
        "threshold": threshold,
        "coord_scale": coord_scale,
        "count": count,
    }
    return write_manifest(out_dir, entries, "class", params)


def synth_rotation_dataset(
    kind: str,
    n_samples: int,
    mode: str,
    seed: int,
    out_dir,
    axis: str = "z",
    resolution: int = 10,
    angle_max: float = 2 * np.pi,
) -> str:
    """Write rotated copies of one synthetic base shape plus a labeled manifest.

    ``mode`` is 'axis' (scalar angle labels, uniform on [0, angle_max)) or
    'full' (flattened Haar-random rotation matrices).
    """
    if n_samples < 10:
        raise ValueError("n_samples must be >= 10")
    if mode not in ("axis", "full"):
        raise ValueError("mode must be 'axis' or 'full'")
    os.makedirs(out_dir, exist_ok=True)
    base = generate_synthetic_shape(kind, resolution=resolution, seed=seed)
    entries = []
    if mode == "axis":
        rng = np.random.default_rng([seed, 1])
        angles = rng.uniform(0.0, angle_max, size=n_samples)
        for i, t in enumerate(angles):
            name = f"mesh_{i:05d}.off"
            save_mesh(rotate_mesh(base, axis_rotation(axis, t)), os.path.join(out_dir, name))
            entries.append((name, float(t)))
        label_kind = "angle"
    else:
        for i in range(n_samples):
            r = random_rotation([seed, 1, i])
            name = f"mesh_{i:05d}.off"
            save_mesh(rotate_mesh(base, r), os.path.join(out_dir, name))
            entries.append((name, r.ravel()))
        label_kind = "rotation9"
    params = {
        "kind": kind,
        "mode": mode,
        "axis": axis,
        "seed": seed,
        "resolution": resolution,
        "coord_scale": 1.0,
        "angle_sampling": (
            f"uniform [0, {angle_max:.6g}) radians" if mode == "axis" else "Haar-uniform"
        ),
    }
    return write_manifest(out_dir, entries, label_kind, params)
