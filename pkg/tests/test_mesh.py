import numpy as np
import pytest

from varshape.errors import DegenerateEdge, DegenerateFace, EmptyImage
from varshape.generate import blob, bumped_box, ellipsoid, generate_synthetic_shape, torus
from varshape.mesh import (
    GrayImage,
    PolylineGraph,
    TriMesh,
    all_triangle_geometry,
    decimate_cluster,
    face_diameters,
    has_consistent_winding,
    heightmap_to_closed_mesh,
    is_closed,
    permute_mesh,
    remove_faces,
    rotate_mesh,
    scale_mesh,
    segment_geometry,
    signed_volume,
    subdivide_midpoint,
    total_area,
    triangle_geometry,
)
from varshape.rotation import axis_rotation, random_rotation


def geometry_multiset(mesh):
    centers, normals, areas, valid = all_triangle_geometry(mesh)
    rows = np.concatenate([centers[valid], normals[valid], areas[valid, None]], axis=1)
    return rows[np.lexsort(rows.T)]


class TestTriMesh:
    def test_rejects_bad_index(self):
        with pytest.raises(ValueError):
            TriMesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_rejects_nan(self):
        v = np.zeros((3, 3))
        v[0, 0] = np.nan
        with pytest.raises(ValueError):
            TriMesh(v, [[0, 1, 2]])

    def test_cube_is_closed_and_wound(self, unit_cube):
        assert has_consistent_winding(unit_cube)
        assert is_closed(unit_cube)
        assert signed_volume(unit_cube) == pytest.approx(1.0)


class TestTriangleGeometry:
    def test_right_triangle(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        center, normal, area = triangle_geometry(mesh, 0)
        np.testing.assert_allclose(center, [1 / 3, 1 / 3, 0])
        np.testing.assert_allclose(normal, [0, 0, 1])
        assert area == pytest.approx(0.5)

    def test_collinear_raises(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
        with pytest.raises(DegenerateFace):
            triangle_geometry(mesh, 0)

    def test_equilateral_matches_heron(self):
        # side length 2 in the xy-plane
        mesh = TriMesh([[0, 0, 0], [2, 0, 0], [1, np.sqrt(3), 0]], [[0, 1, 2]])
        _, _, area = triangle_geometry(mesh, 0)
        a = b = c = 2.0
        s = (a + b + c) / 2
        heron = np.sqrt(s * (s - a) * (s - b) * (s - c))
        assert area == pytest.approx(heron, abs=1e-12)
        assert area == pytest.approx(np.sqrt(3.0), abs=1e-12)

    def test_winding_flips_normal(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 2, 1]])
        _, normal, _ = triangle_geometry(mesh, 0)
        np.testing.assert_allclose(normal, [0, 0, -1])


class TestSegmentGeometry:
    def test_unit_segment_2d(self):
        g = PolylineGraph([[0, 0], [1, 0]], [[0, 1]])
        center, tangent, length = segment_geometry(g, 0)
        np.testing.assert_allclose(center, [0.5, 0])
        np.testing.assert_allclose(tangent, [1, 0])
        assert length == pytest.approx(1.0)

    def test_vertical_segment_3d(self):
        g = PolylineGraph([[0, 0, 0], [0, 0, 2]], [[0, 1]])
        center, tangent, length = segment_geometry(g, 0)
        np.testing.assert_allclose(center, [0, 0, 1])
        np.testing.assert_allclose(tangent, [0, 0, 1])
        assert length == pytest.approx(2.0)

    def test_diagonal_matches_pythagoras(self):
        g = PolylineGraph([[1, 1], [2, 2]], [[0, 1]])
        _, tangent, length = segment_geometry(g, 0)
        assert length == pytest.approx(np.hypot(1, 1))
        np.testing.assert_allclose(tangent, [np.sqrt(2) / 2, np.sqrt(2) / 2])

    def test_zero_length_raises(self):
        g = PolylineGraph([[1, 1], [1, 1]], [[0, 1]])
        with pytest.raises(DegenerateEdge):
            segment_geometry(g, 0)


class TestRotateMesh:
    def test_identity(self, unit_cube):
        out = rotate_mesh(unit_cube, np.eye(3))
        np.testing.assert_array_equal(out.vertices, unit_cube.vertices)
        np.testing.assert_array_equal(out.faces, unit_cube.faces)

    def test_half_turn_involution(self, unit_cube):
        r = axis_rotation("z", np.pi)
        out = rotate_mesh(rotate_mesh(unit_cube, r), r)
        np.testing.assert_allclose(out.vertices, unit_cube.vertices, atol=1e-12)

    def test_quarter_turn_maps_x_to_y(self):
        mesh = TriMesh([[1, 0, 0], [0, 0, 0], [0, 0, 1]], [[0, 1, 2]])
        out = rotate_mesh(mesh, axis_rotation("z", np.pi / 2))
        np.testing.assert_allclose(out.vertices[0], [0, 1, 0], atol=1e-15)

    def test_preserves_pairwise_distances(self):
        mesh = blob(resolution=6, seed=0)
        r = random_rotation(3)
        out = rotate_mesh(mesh, r)
        d0 = np.linalg.norm(mesh.vertices[:, None] - mesh.vertices[None], axis=2)
        d1 = np.linalg.norm(out.vertices[:, None] - out.vertices[None], axis=2)
        np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-12)


class TestSubdivide:
    def test_single_triangle(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        out = subdivide_midpoint(mesh)
        assert out.n_faces == 4
        assert total_area(out) == pytest.approx(0.5, abs=1e-12)

    def test_cube(self, unit_cube):
        out = subdivide_midpoint(unit_cube)
        assert out.n_faces == 48
        assert total_area(out) == pytest.approx(6.0, abs=1e-12)
        assert is_closed(out)

    def test_twice_preserves_area(self, unit_cube):
        once = subdivide_midpoint(unit_cube)
        twice = subdivide_midpoint(once)
        assert total_area(twice) == pytest.approx(total_area(once), rel=1e-12)

    def test_normals_unchanged(self, unit_cube):
        out = subdivide_midpoint(unit_cube)
        parent_normals = all_triangle_geometry(unit_cube)[1]
        child_normals = all_triangle_geometry(out)[1]
        for k in range(out.n_faces):
            np.testing.assert_allclose(child_normals[k], parent_normals[k // 4], atol=1e-12)


class TestPermute:
    def test_identity_seed(self, unit_cube):
        out = permute_mesh(unit_cube, seed=None)
        np.testing.assert_array_equal(out.vertices, unit_cube.vertices)
        np.testing.assert_array_equal(out.faces, unit_cube.faces)

    def test_preserves_geometry_multiset_exactly(self):
        mesh = blob(resolution=7, seed=5)
        out = permute_mesh(mesh, seed=123)
        np.testing.assert_array_equal(geometry_multiset(out), geometry_multiset(mesh))

    def test_deterministic(self, unit_cube):
        a = permute_mesh(unit_cube, seed=9)
        b = permute_mesh(unit_cube, seed=9)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.faces, b.faces)

    def test_preserves_winding(self):
        mesh = ellipsoid(resolution=6)
        assert has_consistent_winding(permute_mesh(mesh, seed=4))


class TestRemoveFaces:
    def test_zero_fraction(self, unit_cube):
        out = remove_faces(unit_cube, 0.0, seed=1)
        np.testing.assert_array_equal(out.faces, unit_cube.faces)

    def test_half_of_cube(self, unit_cube):
        out = remove_faces(unit_cube, 0.5, seed=1)
        assert out.n_faces == 6
        assert out.n_vertices == unit_cube.n_vertices

    def test_deterministic(self, unit_cube):
        a = remove_faces(unit_cube, 0.4, seed=7)
        b = remove_faces(unit_cube, 0.4, seed=7)
        np.testing.assert_array_equal(a.faces, b.faces)

    def test_keeps_face_order(self):
        mesh = ellipsoid(resolution=8)
        out = remove_faces(mesh, 0.3, seed=2)
        # surviving faces appear in the same relative order
        kept = {tuple(f) for f in out.faces}
        original_order = [tuple(f) for f in mesh.faces if tuple(f) in kept]
        assert original_order == [tuple(f) for f in out.faces]

    def test_bad_fraction(self, unit_cube):
        with pytest.raises(ValueError):
            remove_faces(unit_cube, 1.0, seed=0)


class TestDecimate:
    def test_ratio_one_unchanged(self, unit_cube):
        out = decimate_cluster(unit_cube, 1.0)
        np.testing.assert_array_equal(out.faces, unit_cube.faces)

    def test_sphere_quarter_ratio(self):
        mesh = ellipsoid(resolution=23)  # 2024 faces
        assert mesh.n_faces == 2024
        out = decimate_cluster(mesh, 0.25)
        assert 450 <= out.n_faces <= 550

    def test_sphere_area_roughly_preserved(self):
        mesh = ellipsoid(resolution=23)
        out = decimate_cluster(mesh, 0.25)
        assert abs(total_area(out) - total_area(mesh)) <= 0.15 * total_area(mesh)

    def test_bad_ratio(self, unit_cube):
        with pytest.raises(ValueError):
            decimate_cluster(unit_cube, 0.0)


class TestGenerators:
    def test_unit_sphere_area(self):
        mesh = ellipsoid(1, 1, 1, resolution=32)
        assert abs(total_area(mesh) - 4 * np.pi) <= 0.02 * 4 * np.pi

    @pytest.mark.parametrize("kind", ["ellipsoid", "torus", "bumped_box", "blob"])
    def test_closed_and_outward(self, kind):
        mesh = generate_synthetic_shape(kind, resolution=8, seed=3)
        assert has_consistent_winding(mesh)
        assert is_closed(mesh)
        assert signed_volume(mesh) > 0

    def test_blob_deterministic(self):
        a = blob(resolution=8, seed=7)
        b = blob(resolution=8, seed=7)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.faces, b.faces)

    def test_blob_rotationally_asymmetric(self):
        # rotating must change the vertex set (up to reordering)
        mesh = blob(resolution=8, seed=1)
        rot = rotate_mesh(mesh, axis_rotation("z", 1.0))
        d = np.abs(np.sort(mesh.vertices.ravel()) - np.sort(rot.vertices.ravel())).max()
        assert d > 1e-3

    def test_torus_area(self):
        mesh = torus(major=1.0, minor=0.4, resolution=32)
        assert total_area(mesh) == pytest.approx(4 * np.pi**2 * 0.4, rel=0.02)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            ellipsoid(resolution=3)

    def test_bumped_box_asymmetric(self):
        mesh = bumped_box(resolution=4)
        for axis in "xyz":
            rot = rotate_mesh(mesh, axis_rotation(axis, np.pi / 2))
            d = np.abs(np.sort(mesh.vertices.ravel()) - np.sort(rot.vertices.ravel())).max()
            assert d > 1e-3


class TestHeightmap:
    def test_all_zero_raises(self):
        with pytest.raises(EmptyImage):
            heightmap_to_closed_mesh(GrayImage(3, 3, np.zeros((3, 3))), 5.0, 16.0)

    def test_full_intensity_box(self):
        img = GrayImage(2, 2, np.full((2, 2), 255.0))
        mesh = heightmap_to_closed_mesh(img, height_scale=3.0, base_threshold=16.0)
        # a 1 x 1 x 3 box: 2 sheets of area 1 plus 4 walls of area 3
        assert total_area(mesh) == pytest.approx(2 * 1.0 + 4 * 3.0, abs=1e-12)
        assert is_closed(mesh)
        assert signed_volume(mesh) == pytest.approx(3.0)

    def test_arbitrary_images_closed(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            px = rng.integers(0, 256, size=(9, 11)).astype(float)
            mesh = heightmap_to_closed_mesh(GrayImage(11, 9, px), 4.0, 100.0)
            assert is_closed(mesh)
            assert signed_volume(mesh) > 0

    def test_diagonal_pinch_resolved(self):
        px = np.zeros((4, 4))
        px[0, 0] = px[1, 1] = px[2, 2] = 255.0  # diagonal chain of active cells
        mesh = heightmap_to_closed_mesh(GrayImage(4, 4, px), 2.0, 16.0)
        assert is_closed(mesh)


class TestScaleAndDiameters:
    def test_scale_area_quadratic(self, unit_cube):
        assert total_area(scale_mesh(unit_cube, 2.0)) == pytest.approx(24.0)

    def test_face_diameters(self):
        mesh = TriMesh([[0, 0, 0], [3, 0, 0], [0, 4, 0]], [[0, 1, 2]])
        np.testing.assert_allclose(face_diameters(mesh), [5.0])
