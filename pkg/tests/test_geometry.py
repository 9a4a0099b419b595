import numpy as np
import pytest

from hoikit.errors import ValidationError
from hoikit.geometry import (
    BasisPointSet,
    TriangleMesh,
    box_mesh,
    closest_point_on_triangles,
    closest_surface_point,
    detect_contacts,
    encode_bps,
    icosphere,
    is_inside,
    load_obj,
    project_geometry,
    sample_basis_points,
    save_obj,
    signed_distance,
    unsigned_distance,
)
from hoikit.kinematics import relative_to_global
from hoikit.motion import MotionSequence, ObjectTrajectory
from hoikit.rotation import axis_angle_to_matrix, random_rotation

TESS_TOL = 0.01  # 3-subdivision icosphere surface deviation


@pytest.fixture(scope="module")
def sphere():
    return icosphere(3, 1.0)


class TestMesh:
    def test_degenerate_triangles_filtered(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
        tris = np.array([[0, 1, 2], [0, 1, 3]])  # second is collinear
        mesh = TriangleMesh(verts, tris)
        assert len(mesh.triangles) == 1

    def test_index_range_checked(self):
        with pytest.raises(ValidationError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))

    def test_box_and_sphere_watertight(self, sphere):
        assert box_mesh([0.1, 0.2, 0.3]).is_watertight()
        assert sphere.is_watertight()

    def test_open_mesh_not_watertight(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        mesh = TriangleMesh(verts, np.array([[0, 1, 2]]))
        assert not mesh.is_watertight()

    def test_obj_round_trip(self, tmp_path):
        mesh = box_mesh([0.2, 0.3, 0.1])
        path = tmp_path / "box.obj"
        save_obj(path, mesh)
        back = load_obj(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.triangles, mesh.triangles)

    def test_obj_ignores_other_records_with_warning(self, tmp_path):
        path = tmp_path / "mixed.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nusemtl foo\nf 1 2 3\n"
        )
        with pytest.warns(UserWarning, match="ignored OBJ records"):
            mesh = load_obj(path)
        assert len(mesh.triangles) == 1

    def test_obj_fan_triangulates_quads(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        assert len(load_obj(path).triangles) == 2


class TestBasisPoints:
    def test_determinism(self):
        a = sample_basis_points(42, 256, 1.0)
        b = sample_basis_points(42, 256, 1.0)
        assert np.array_equal(a.points, b.points)

    def test_within_radius(self):
        bps = sample_basis_points(1, 512, 0.7)
        assert np.all(np.linalg.norm(bps.points, axis=1) <= 0.7)

    def test_uniform_ball_mean_norm(self):
        # mean ||p|| of a uniform unit ball is 3/4
        bps = sample_basis_points(7, 1024, 1.0)
        mean = np.linalg.norm(bps.points, axis=1).mean()
        assert abs(mean - 0.75) / 0.75 < 0.05

    def test_invalid_args(self):
        with pytest.raises(ValidationError):
            sample_basis_points(0, 0)


class TestClosestPoint:
    def test_matches_brute_force_vertices_edges_faces(self):
        rng = np.random.default_rng(10)
        tri = rng.normal(size=(40, 3, 3))
        for _ in range(25):
            q = rng.normal(size=3) * 1.5
            pts = closest_point_on_triangles(q, tri)
            d = np.linalg.norm(pts - q, axis=1)
            # dense barycentric sampling as an independent oracle
            grid = []
            for u in np.linspace(0, 1, 21):
                for v in np.linspace(0, 1 - u, max(int((1 - u) * 21), 1)):
                    grid.append((u, v, 1 - u - v))
            bary = np.array(grid)
            for i in range(len(tri)):
                samples = bary @ tri[i]
                brute = np.linalg.norm(samples - q, axis=1).min()
                assert d[i] <= brute + 1e-9

    def test_point_on_vertex(self, sphere):
        p, d = closest_surface_point(sphere, sphere.vertices[0])
        assert d < 1e-12


class TestBps:
    def test_origin_point_unit_sphere(self, sphere):
        basis = BasisPointSet(np.zeros((1, 3)), 0, 1.0)
        feat = encode_bps(sphere, basis)
        assert abs(np.linalg.norm(feat.vectors[0]) - 1.0) < TESS_TOL

    def test_basis_point_on_vertex_zero_vector(self, sphere):
        v = sphere.vertices[3]
        basis = BasisPointSet(v[None] * (0.999 / np.linalg.norm(v)), 0, 1.0)
        feat = encode_bps(sphere, basis)
        assert np.linalg.norm(feat.vectors[0]) < 2e-3

    def test_translation_covariance_single_triangle(self):
        # translating along the triangle normal keeps every closest-point
        # projection in the same region, so nearest points translate exactly
        tri = TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
        rng = np.random.default_rng(3)
        basis = BasisPointSet(rng.uniform(-1, 1, size=(16, 3)) * 0.5, 3, 1.0)
        feat = encode_bps(tri, basis)
        t = np.array([0.0, 0.0, 0.15])
        moved = TriangleMesh(tri.vertices + t, tri.triangles)
        feat2 = encode_bps(moved, basis)
        nearest = feat.vectors + basis.points
        assert np.abs(feat2.vectors - (nearest + t - basis.points)).max() < 1e-9

    def test_translation_invariance_mesh_and_basis_together(self):
        mesh = box_mesh([0.2, 0.1, 0.3])
        rng = np.random.default_rng(8)
        basis = BasisPointSet(rng.uniform(-0.5, 0.5, size=(16, 3)), 8, 1.0)
        feat = encode_bps(mesh, basis)
        t = np.array([0.3, -0.2, 0.15])
        moved = TriangleMesh(mesh.vertices + t, mesh.triangles)
        moved_basis = BasisPointSet.__new__(BasisPointSet)  # bypass radius check
        moved_basis.points = basis.points + t
        feat2 = encode_bps(moved, moved_basis)
        assert np.abs(feat2.vectors - feat.vectors).max() < 1e-12

    def test_rotation_covariance(self):
        mesh = box_mesh([0.2, 0.1, 0.3])
        rng = np.random.default_rng(4)
        basis = BasisPointSet(rng.uniform(-0.5, 0.5, size=(32, 3)), 4, 1.0)
        feat = encode_bps(mesh, basis)
        r = random_rotation(rng)
        rotated_mesh = TriangleMesh(mesh.vertices @ r.T, mesh.triangles)
        rotated_basis = BasisPointSet(basis.points @ r.T, 4, 1.0)
        feat_rot = encode_bps(rotated_mesh, rotated_basis)
        assert np.abs(feat_rot.vectors - feat.vectors @ r.T).max() < 1e-9

    def test_nearest_distance_bounded_by_vertex_distance(self, sphere):
        rng = np.random.default_rng(5)
        basis = BasisPointSet(rng.uniform(-1, 1, size=(8, 3)) * 0.57, 5, 1.0)
        feat = encode_bps(sphere, basis)
        for b, vec in zip(basis.points, feat.vectors):
            vertex_min = np.linalg.norm(sphere.vertices - b, axis=1).min()
            assert np.linalg.norm(vec) <= vertex_min + 1e-12


class TestProjection:
    def test_identity_padding(self):
        rng = np.random.default_rng(0)
        g = rng.normal(size=(64, 3))
        p = np.zeros((16, 64))
        p[:, :16] = np.eye(16)
        assert np.allclose(project_geometry(g, p), g[:16])

    def test_zero_projection(self):
        g = np.ones((64, 3))
        assert np.all(project_geometry(g, np.zeros((16, 64))) == 0)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=(16, 64))
        g1 = rng.normal(size=(64, 3))
        g2 = rng.normal(size=(64, 3))
        lhs = project_geometry(2.0 * g1 + 3.0 * g2, p)
        rhs = 2.0 * project_geometry(g1, p) + 3.0 * project_geometry(g2, p)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            project_geometry(np.zeros((64, 3)), np.zeros((16, 32)))


class TestSignedDistance:
    def test_center_of_unit_sphere(self, sphere):
        assert abs(signed_distance(sphere, [0, 0, 0]) + 1.0) < TESS_TOL

    def test_outside_distance(self, sphere):
        assert abs(signed_distance(sphere, [2.0, 0, 0]) - 1.0) < TESS_TOL

    def test_on_vertex_zero(self, sphere):
        assert abs(signed_distance(sphere, sphere.vertices[10])) < 1e-9

    def test_sign_flip_along_ray(self, sphere):
        for x in (0.5, 0.9):
            assert signed_distance(sphere, [x, 0, 0]) < 0
        for x in (1.1, 1.8):
            assert signed_distance(sphere, [x, 0, 0]) > 0
        for x in (0.3, 0.8, 1.2, 2.0):
            assert abs(abs(signed_distance(sphere, [x, 0, 0])) - unsigned_distance(sphere, [x, 0, 0])) < 1e-12

    def test_refuses_open_mesh(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        mesh = TriangleMesh(verts, np.array([[0, 1, 2]]))
        with pytest.raises(ValidationError):
            signed_distance(mesh, [0, 0, 1])
        assert unsigned_distance(mesh, [0, 0, 1.0]) == pytest.approx(1.0)

    def test_box_interior_exact(self):
        box = box_mesh([0.2, 0.3, 0.4])
        assert signed_distance(box, [0, 0, 0]) == pytest.approx(-0.2)
        assert signed_distance(box, [0.6, 0, 0]) == pytest.approx(0.4)
        assert is_inside(box, [0.19, 0, 0])
        assert not is_inside(box, [0.21, 0, 0])


class TestContacts:
    def _motion(self, skeleton, identity_rot6d, hand_targets):
        t = len(hand_targets)
        root = np.zeros((t, 3))
        motion = MotionSequence(
            skeleton, root, np.tile(identity_rot6d, (t, skeleton.joint_count, 1)), 30.0
        )
        g = relative_to_global(motion)
        # plant the left hand at requested world positions
        lh = skeleton.roles["left_hand"]
        for i, target in enumerate(hand_targets):
            g.positions[i, lh] = target
        return g

    def test_contact_on_surface_and_far(self, skeleton, identity_rot6d, sphere):
        g = self._motion(skeleton, identity_rot6d, [[1.0, 0, 0], [5.0, 0, 0], [1.04, 0, 0]])
        objects = ObjectTrajectory(np.zeros((3, 3)), np.tile(np.eye(3), (3, 1, 1)), 30.0)
        contacts = detect_contacts(g, objects, sphere, threshold=0.05)
        assert contacts.values[0, 0] == 1.0  # on the surface
        assert contacts.values[1, 0] == 0.0  # a meter away
        assert contacts.values[2, 0] == 1.0  # 0.04 m off the surface

    def test_object_pose_respected(self, skeleton, identity_rot6d):
        # hand 0.14 m from the box center: past the face when axis-aligned,
        # but inside the rotated box (the corner reaches further out)
        box = box_mesh([0.1, 0.1, 0.1])
        g = self._motion(skeleton, identity_rot6d, [[1.09, 0.0, 0.0], [1.09, 0.0, 0.0]])
        rot45 = axis_angle_to_matrix(np.array([0, 0, np.pi / 4]))
        positions = np.array([[0.95, 0, 0], [0.95, 0, 0]])
        objects = ObjectTrajectory(positions, np.stack([rot45, np.eye(3)]), 30.0)
        contacts = detect_contacts(g, objects, box, threshold=0.03)
        assert contacts.values[0, 0] == 1.0
        assert contacts.values[1, 0] == 0.0

    def test_length_mismatch(self, skeleton, identity_rot6d, sphere):
        g = self._motion(skeleton, identity_rot6d, [[0, 0, 0], [0, 0, 0]])
        objects = ObjectTrajectory(np.zeros((3, 3)), np.tile(np.eye(3), (3, 1, 1)), 30.0)
        with pytest.raises(ValidationError):
            detect_contacts(g, objects, sphere)
