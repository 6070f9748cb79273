"""SO(3) utilities: axis rotations, Haar sampling, geodesic distance, projection."""
from __future__ import annotations

import numpy as np

from .errors import SingularInput

ORTHOGONALITY_TOL = 1e-9


def is_rotation_matrix(m: np.ndarray, tol: float = ORTHOGONALITY_TOL) -> bool:
    """R is a rotation iff R^T R = I and det R = +1 (within tol)."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    return (
        np.abs(m.T @ m - np.eye(3)).max() <= tol
        and abs(np.linalg.det(m) - 1.0) <= tol
    )


def axis_rotation(axis: str, angle: float) -> np.ndarray:
    """Rotation matrix about a coordinate axis ('x', 'y' or 'z')."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
    raise ValueError(f"axis must be one of x, y, z, got {axis!r}")


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Unit quaternion uniform on S^3 (normalized 4-vector of Gaussians)."""
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def random_rotation(seed) -> np.ndarray:
    """Rotation drawn uniformly w.r.t. Haar measure on SO(3); deterministic per seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return quaternion_to_matrix(random_quaternion(rng))


def geodesic_distance_so3(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic (angular) distance arccos((tr(R1^T R2) - 1) / 2), in radians."""
    t = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(t, -1.0, 1.0)))


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm, via SVD with det correction.

    Accepts a 3x3 matrix or a flat 9-vector (row-major).

    Raises
    ------
    SingularInput
        When the two smallest singular values vanish; the nearest rotation
        is then not unique.
    """
    m = np.asarray(m, dtype=np.float64).reshape(3, 3)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    u, s, vt = np.linalg.svd(m)
    if s[1] <= 1e-12 * max(s[0], 1.0):
        raise SingularInput("matrix has rank < 2, projection not unique")
    d = np.linalg.det(u @ vt)
    return u @ np.diag([1.0, 1.0, float(np.sign(d))]) @ vt
