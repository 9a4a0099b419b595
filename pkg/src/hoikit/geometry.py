"""Object geometry: meshes, basis-point-set encoding, signed distance, contacts.

The basis point set is sampled uniformly from the volume of a sphere
(default 1 m radius, 1024 points) around the object's canonical-frame
origin. Encoding an object records the directional vector from each basis
point to its nearest point on the mesh surface; a linear projection
compresses the 1024x3 code to 256x3.

Distance queries are brute force over all triangles (desk-scale meshes);
the closest-point-on-triangle routine follows the classic region test
from Ericson's Real-Time Collision Detection, vectorized over triangles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .motion import ContactChannels, GlobalMotion, ObjectTrajectory

DEFAULT_BPS_COUNT = 1024
DEFAULT_BPS_RADIUS = 1.0
DEFAULT_CONTACT_THRESHOLD = 0.05  # meters
PROJECTED_BPS_COUNT = 256


@dataclass
class TriangleMesh:
    """Triangle mesh; degenerate (zero-area) triangles are dropped on build."""

    vertices: np.ndarray  # [N,3]
    triangles: np.ndarray  # [M,3] vertex indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must have shape [N,3]")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValidationError("triangles must have shape [M,3]")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValidationError("triangle indices out of range")
        tri = self.vertices[self.triangles]
        area2 = np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=-1
        )
        keep = area2 > 1e-12
        if not np.all(keep):
            self.triangles = self.triangles[keep]
        if len(self.triangles) == 0:
            raise ValidationError("mesh has no non-degenerate triangles")
        self._tri_verts = self.vertices[self.triangles]
        self._watertight: bool | None = None

    @property
    def triangle_vertices(self) -> np.ndarray:
        """[M,3,3] triangle corner coordinates."""
        return self._tri_verts

    def is_watertight(self) -> bool:
        """True when every edge is shared by exactly two triangles."""
        if self._watertight is None:
            edges: dict[tuple[int, int], int] = {}
            for a, b, c in self.triangles:
                for u, v in ((a, b), (b, c), (c, a)):
                    key = (min(u, v), max(u, v))
                    edges[key] = edges.get(key, 0) + 1
            self._watertight = all(n == 2 for n in edges.values())
        return self._watertight

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bounding_corners(self) -> np.ndarray:
        """[8,3] axis-aligned bounding-box corners in the mesh frame."""
        lo, hi = self.bounds()
        grid = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        return grid

    def diameter(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))


def load_obj(path) -> TriangleMesh:
    """Read a Wavefront OBJ: vertices and (fan-triangulated) faces only.

    Records other than v/f are ignored; a single warning lists the ignored
    record types.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    skipped: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                if len(idx) < 3:
                    raise ValidationError(f"face with fewer than 3 vertices in {path}")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
            else:
                skipped.add(parts[0])
    if skipped:
        warnings.warn(f"ignored OBJ records: {sorted(skipped)}", stacklevel=2)
    if not vertices or not faces:
        raise ValidationError(f"no usable geometry in {path}")
    return TriangleMesh(np.array(vertices), np.array(faces))


def save_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def box_mesh(half_extents) -> TriangleMesh:
    """Axis-aligned watertight box centered at the origin."""
    h = np.asarray(half_extents, dtype=np.float64)
    if h.shape != (3,) or np.any(h <= 0):
        raise ValidationError("half extents must be three positive numbers")
    signs = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)])
    verts = signs * h
    # outward-wound faces, two triangles per box side
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return TriangleMesh(verts, np.array(tris))


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron projected to a sphere (watertight)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = (np.array(verts[i]) + np.array(verts[j])) / 2.0
                m /= np.linalg.norm(m)
                verts.append(tuple(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return TriangleMesh(np.array(verts) * radius, np.array(faces))


@dataclass
class BasisPointSet:
    """Deterministic point cloud inside a sphere; same seed, same points."""

    points: np.ndarray  # [count,3]
    seed: int
    radius: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if np.any(np.linalg.norm(self.points, axis=-1) > self.radius + 1e-12):
            raise ValidationError("basis points must lie within the stated radius")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class BpsFeature:
    """Direction vectors from basis points to their nearest surface points."""

    vectors: np.ndarray  # [count,3]
    projected: np.ndarray | None = None  # [256,3]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.projected is not None:
            self.projected = np.asarray(self.projected, dtype=np.float64)


def sample_basis_points(
    seed: int, count: int = DEFAULT_BPS_COUNT, radius: float = DEFAULT_BPS_RADIUS
) -> BasisPointSet:
    """Uniform-in-volume sphere samples via rejection from the bounding cube."""
    if count < 1 or radius <= 0:
        raise ValidationError("count must be >= 1 and radius positive")
    rng = np.random.default_rng(seed)
    pts = np.empty((0, 3))
    while len(pts) < count:
        cand = rng.uniform(-radius, radius, size=(2 * count, 3))
        keep = cand[np.linalg.norm(cand, axis=1) <= radius]
        pts = np.concatenate([pts, keep])
    return BasisPointSet(pts[:count].copy(), seed, radius)


def closest_point_on_triangles(point: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Closest point to ``point`` on each triangle of ``tri`` [M,3,3].

    Region tests from Ericson's Real-Time Collision Detection, done for all
    triangles at once.
    """
    p = np.asarray(point, dtype=np.float64)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    result = np.zeros_like(a)
    remain = np.ones(len(tri), dtype=bool)

    is_a = (d1 <= 0) & (d2 <= 0)
    result[is_a] = a[is_a]
    remain &= ~is_a

    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    is_b = (d3 >= 0) & (d4 <= d3) & remain
    result[is_b] = b[is_b]
    remain &= ~is_b

    vc = d1 * d4 - d3 * d2
    is_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0) & remain
    if np.any(is_ab):
        v = (d1[is_ab] / (d1[is_ab] - d3[is_ab]))[:, None]
        result[is_ab] = a[is_ab] + v * ab[is_ab]
        remain &= ~is_ab

    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    is_c = (d6 >= 0) & (d5 <= d6) & remain
    result[is_c] = c[is_c]
    remain &= ~is_c

    vb = d5 * d2 - d1 * d6
    is_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0) & remain
    if np.any(is_ac):
        w = (d2[is_ac] / (d2[is_ac] - d6[is_ac]))[:, None]
        result[is_ac] = a[is_ac] + w * ac[is_ac]
        remain &= ~is_ac

    va = d3 * d6 - d5 * d4
    is_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0) & remain
    if np.any(is_bc):
        w = ((d4[is_bc] - d3[is_bc]) / ((d4[is_bc] - d3[is_bc]) + (d5[is_bc] - d6[is_bc])))[:, None]
        result[is_bc] = b[is_bc] + w * (c[is_bc] - b[is_bc])
        remain &= ~is_bc

    if np.any(remain):
        denom = va[remain] + vb[remain] + vc[remain]
        v = (vb[remain] / denom)[:, None]
        w = (vc[remain] / denom)[:, None]
        result[remain] = a[remain] + v * ab[remain] + w * ac[remain]
    return result


def closest_surface_point(mesh: TriangleMesh, point) -> tuple[np.ndarray, float]:
    """Nearest point on the mesh surface and its distance."""
    cand = closest_point_on_triangles(point, mesh.triangle_vertices)
    d = np.linalg.norm(cand - np.asarray(point, dtype=np.float64), axis=1)
    i = int(np.argmin(d))
    return cand[i], float(d[i])


def unsigned_distance(mesh: TriangleMesh, point) -> float:
    return closest_surface_point(mesh, point)[1]


def encode_bps(mesh: TriangleMesh, basis: BasisPointSet) -> BpsFeature:
    """Directional vectors basis point -> nearest mesh surface point."""
    vectors = np.empty_like(basis.points)
    for i, b in enumerate(basis.points):
        nearest, _ = closest_surface_point(mesh, b)
        vectors[i] = nearest - b
    return BpsFeature(vectors)


def project_geometry(vectors: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """Apply a linear basis-count -> low-dim projection per coordinate axis."""
    vectors = np.asarray(vectors, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    if projection.ndim != 2 or vectors.ndim != 2 or projection.shape[1] != vectors.shape[0]:
        raise ValidationError(
            f"projection {projection.shape} does not match vectors {vectors.shape}"
        )
    return projection @ vectors


# fixed, slightly irrational ray directions so grazing an edge with all
# three rays at once is practically impossible
_RAY_DIRS = np.array(
    [
        [0.57735026919, 0.57735026919, 0.57735026919],
        [0.85889356199, -0.40824829046, 0.30860669992],
        [-0.25056280708, 0.93511312653, -0.25056280708],
    ]
)
_RAY_DIRS = _RAY_DIRS / np.linalg.norm(_RAY_DIRS, axis=1, keepdims=True)


def _ray_crossings(origin: np.ndarray, direction: np.ndarray, tri: np.ndarray) -> int:
    """Number of triangles hit by the ray (Moller-Trumbore, vectorized)."""
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - v0
    u = inv * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = inv * (q @ direction)
    t = inv * np.einsum("ij,ij->i", e2, q)
    hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
    return int(np.count_nonzero(hits))


def is_inside(mesh: TriangleMesh, point) -> bool:
    """Ray-parity containment with a 3-ray majority vote."""
    p = np.asarray(point, dtype=np.float64)
    votes = sum(
        _ray_crossings(p, d, mesh.triangle_vertices) % 2 for d in _RAY_DIRS
    )
    return votes >= 2


def signed_distance(mesh: TriangleMesh, point) -> float:
    """Signed distance to the surface: negative inside, zero on it.

    Requires a watertight mesh; unsigned queries remain available via
    unsigned_distance for open meshes.
    """
    if not mesh.is_watertight():
        raise ValidationError("signed distance requires a watertight mesh")
    d = unsigned_distance(mesh, point)
    return -d if is_inside(mesh, point) else d


def detect_contacts(
    global_motion: GlobalMotion,
    objects: ObjectTrajectory,
    mesh: TriangleMesh,
    threshold: float = DEFAULT_CONTACT_THRESHOLD,
) -> ContactChannels:
    """Distance-threshold contact labels for hands and feet.

    A channel is 1 at frame t when the end-effector joint lies within
    ``threshold`` meters of the object surface posed at frame t. Queries
    transform the joint into the object frame rather than moving the mesh.
    """
    if len(global_motion) != len(objects):
        raise ValidationError("motion and object trajectory lengths differ")
    joints = global_motion.skeleton.contact_joints()
    t = len(global_motion)
    out = np.zeros((t, 4))
    for f in range(t):
        rot = objects.rotations[f]
        pos = objects.positions[f]
        for ch, jidx in enumerate(joints):
            local = rot.T @ (global_motion.positions[f, jidx] - pos)
            if unsigned_distance(mesh, local) < threshold:
                out[f, ch] = 1.0
    return ContactChannels(out)
