"""Signed distances over triangle meshes, SDF training sets, reconstruction.

The distance core is exact point-to-triangle geometry: a BVH (median split on
the longest axis, at most 8 triangles per leaf) finds the globally closest
point, and the closest *feature* — face, edge, or vertex, decided exactly by
the region logic of the closest-point routine — selects the angle-weighted
pseudo-normal that signs the distance.  A brute-force all-triangle scan with
the same per-triangle arithmetic serves as the oracle the BVH must agree
with.  The per-query traversal is compiled with numba; everything else is
numpy.

Training sets follow three sample classes: uniform points in the unit cube
with exact distances, area-weighted surface points with distance zero, and
surface points offset along the interpolated pseudo-normal by
``N(0, sigma^2)`` with ``sigma = 0.5 / delta`` and the exact distance
recomputed.  Scenario tags MSS/SMS/SSM assign the large budget to the
uniform/surface/perturbed class respectively.

Reconstruction error is measured by evaluating a trained SDF on a lattice
over the unit cube, emitting the linear-interpolation zero point of every
sign-changing lattice edge, and computing the exact signed distance of those
points back to the source mesh.
"""

from __future__ import annotations

import dataclasses
import warnings

import numba
import numpy as np

from .fielddata import DataError, FieldDataset

__all__ = [
    "TriMesh",
    "Transform",
    "SdfSampleSet",
    "SdfCrossings",
    "load_trimesh",
    "make_icosphere",
    "rescale_to_unit_cube",
    "signed_distance",
    "signed_distance_batch",
    "brute_force_distance",
    "scenario_counts",
    "sample_sdf_training_set",
    "sample_set_to_dataset",
    "extract_zero_crossings",
    "distance_error_stats",
    "SCENARIOS",
    "SIZES",
]

SCENARIOS = ("MSS", "SMS", "SSM")
SIZES = ("large", "small")

# region codes returned by the closest-point routine
_REGION_A, _REGION_B, _REGION_C = 0, 1, 2
_REGION_AB, _REGION_BC, _REGION_CA = 3, 4, 5
_REGION_FACE = 6


# ----- mesh ---------------------------------------------------------------------


@dataclasses.dataclass
class Transform:
    """Uniform similarity ``x_unit = x * scale + offset`` with inverse."""

    scale: float
    offset: np.ndarray  # (3,)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.scale + self.offset

    def invert(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.scale


class TriMesh:
    """Triangle surface with precomputed pseudo-normals and a BVH."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3 or self.vertices.shape[0] == 0:
            raise DataError(f"vertices must be a nonempty (Nv, 3) array, got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or self.triangles.shape[0] == 0:
            raise DataError(f"triangles must be a nonempty (Nt, 3) array, got {self.triangles.shape}")
        if self.triangles.min() < 0 or self.triangles.max() >= self.vertices.shape[0]:
            raise DataError("triangle indices out of vertex range")
        self._build_geometry()
        self._build_bvh()

    @property
    def nv(self) -> int:
        return self.vertices.shape[0]

    @property
    def nt(self) -> int:
        return self.triangles.shape[0]

    def _build_geometry(self) -> None:
        v = self.vertices
        tri = self.triangles
        a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
        cross = np.cross(b - a, c - a)
        norms = np.linalg.norm(cross, axis=1)
        if np.any(norms <= 0.0):
            raise DataError(f"triangle {int(np.argmin(norms))} is degenerate (zero area)")
        self.face_normals = cross / norms[:, None]
        self.face_areas = 0.5 * norms
        self.cum_areas = np.cumsum(self.face_areas)

        # angle-weighted vertex pseudo-normals
        vertex_n = np.zeros_like(v)
        corners = (a, b, c)
        for i in range(3):
            p = corners[i]
            q = corners[(i + 1) % 3] - p
            r = corners[(i + 2) % 3] - p
            qn = q / np.linalg.norm(q, axis=1)[:, None]
            rn = r / np.linalg.norm(r, axis=1)[:, None]
            angles = np.arccos(np.clip(np.einsum("ij,ij->i", qn, rn), -1.0, 1.0))
            np.add.at(vertex_n, tri[:, i], angles[:, None] * self.face_normals)
        lens = np.linalg.norm(vertex_n, axis=1)
        self.vertex_normals = vertex_n / np.where(lens > 0.0, lens, 1.0)[:, None]

        # undirected edges, adjacency, and edge pseudo-normals
        edge_key: dict[tuple[int, int], int] = {}
        edge_faces: list[list[int]] = []
        directions: list[list[int]] = []
        tri_edge_id = np.empty((self.nt, 3), dtype=np.int64)
        for t in range(self.nt):
            i0, i1, i2 = tri[t]
            for e, (u, w) in enumerate(((i0, i1), (i1, i2), (i2, i0))):
                key = (u, w) if u < w else (w, u)
                idx = edge_key.get(key)
                if idx is None:
                    idx = len(edge_faces)
                    edge_key[key] = idx
                    edge_faces.append([])
                    directions.append([])
                edge_faces[idx].append(t)
                directions[idx].append(1 if u < w else -1)
                tri_edge_id[t, e] = idx
        self.tri_edge_id = tri_edge_id
        edge_n = np.zeros((len(edge_faces), 3))
        boundary = 0
        consistent = True
        for idx, faces in enumerate(edge_faces):
            edge_n[idx] = self.face_normals[faces].sum(axis=0)
            if len(faces) == 1:
                boundary += 1
            elif len(faces) == 2:
                if directions[idx][0] == directions[idx][1]:
                    consistent = False
            else:
                consistent = False
        lens = np.linalg.norm(edge_n, axis=1)
        self.edge_normals = edge_n / np.where(lens > 0.0, lens, 1.0)[:, None]
        self.boundary_edges = boundary
        self.watertight = boundary == 0 and consistent
        self.oriented_consistently = consistent

    def _build_bvh(self) -> None:
        tri = self.triangles
        v = self.vertices
        tmin = np.minimum(np.minimum(v[tri[:, 0]], v[tri[:, 1]]), v[tri[:, 2]])
        tmax = np.maximum(np.maximum(v[tri[:, 0]], v[tri[:, 1]]), v[tri[:, 2]])
        centroids = (v[tri[:, 0]] + v[tri[:, 1]] + v[tri[:, 2]]) / 3.0
        order = np.arange(self.nt)
        nodes_min, nodes_max = [], []
        nodes_left, nodes_right = [], []
        nodes_start, nodes_count = [], []
        stack = [(0, self.nt, -1, False)]  # (lo, hi, parent, is_right)
        while stack:
            lo, hi, parent, is_right = stack.pop()
            idx = len(nodes_min)
            seg = order[lo:hi]
            bmin, bmax = tmin[seg].min(axis=0), tmax[seg].max(axis=0)
            nodes_min.append(bmin)
            nodes_max.append(bmax)
            if parent >= 0:
                (nodes_right if is_right else nodes_left)[parent] = idx
            if hi - lo <= 8:
                nodes_left.append(-1)
                nodes_right.append(-1)
                nodes_start.append(lo)
                nodes_count.append(hi - lo)
                continue
            axis = int(np.argmax(bmax - bmin))
            local = np.argsort(centroids[seg, axis], kind="stable")
            order[lo:hi] = seg[local]
            mid = lo + (hi - lo) // 2
            nodes_left.append(-2)  # patched by children
            nodes_right.append(-2)
            nodes_start.append(-1)
            nodes_count.append(0)
            # push right first so the left child is processed (and numbered) first
            stack.append((mid, hi, idx, True))
            stack.append((lo, mid, idx, False))
        self.bvh_min = np.array(nodes_min)
        self.bvh_max = np.array(nodes_max)
        self.bvh_left = np.array(nodes_left, dtype=np.int64)
        self.bvh_right = np.array(nodes_right, dtype=np.int64)
        self.bvh_start = np.array(nodes_start, dtype=np.int64)
        self.bvh_count = np.array(nodes_count, dtype=np.int64)
        self.bvh_order = order
        self._tri_a = v[tri[:, 0]].copy()
        self._tri_b = v[tri[:, 1]].copy()
        self._tri_c = v[tri[:, 2]].copy()


# ----- loading ---------------------------------------------------------------------


def load_trimesh(path) -> TriMesh:
    """Read an ASCII STL or OBJ surface (triangles only, 1-based OBJ indices)."""
    with open(path, "rb") as f:
        blob = f.read()
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not ASCII STL/OBJ text ({e})") from None
    stripped = text.lstrip()
    if stripped.startswith("solid"):
        return _load_stl(text, path)
    return _load_obj(text, path)


def _load_obj(text: str, path) -> TriMesh:
    vertices, faces = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise DataError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(p) for p in parts[1:4]])
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
        elif tag == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise DataError(f"{path}:{lineno}: face has {len(refs)} vertices; triangles only")
            idx = []
            for ref in refs:
                head = ref.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad face index {ref!r}") from None
                if i <= 0:
                    raise DataError(f"{path}:{lineno}: face indices must be positive, got {i}")
                idx.append(i - 1)
            faces.append(idx)
        # other OBJ records (vn, vt, usemtl, o, g, s, ...) are ignored
    if not vertices or not faces:
        raise DataError(f"{path}: OBJ contains no triangles")
    return TriMesh(np.array(vertices), np.array(faces))


def _load_stl(text: str, path) -> TriMesh:
    raw_vertices = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "vertex":
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: STL vertex needs 3 coordinates")
            try:
                raw_vertices.append(tuple(float(p) for p in parts[1:4]))
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
        elif parts[0] not in (
            "solid",
            "facet",
            "outer",
            "endloop",
            "endfacet",
            "endsolid",
            "normal",
            "loop",
        ):
            raise DataError(f"{path}:{lineno}: unexpected STL record {parts[0]!r}")
    if len(raw_vertices) == 0 or len(raw_vertices) % 3 != 0:
        raise DataError(f"{path}: STL vertex count {len(raw_vertices)} is not a multiple of 3")
    # weld exactly-equal coordinates
    vert_id: dict[tuple[float, float, float], int] = {}
    vertices, faces = [], []
    for t in range(len(raw_vertices) // 3):
        idx = []
        for k in range(3):
            key = raw_vertices[3 * t + k]
            i = vert_id.get(key)
            if i is None:
                i = len(vertices)
                vert_id[key] = i
                vertices.append(key)
            idx.append(i)
        faces.append(idx)
    return TriMesh(np.array(vertices), np.array(faces))


def make_icosphere(subdivisions: int = 3, radius: float = 0.5, center=(0.5, 0.5, 0.5)) -> TriMesh:
    """Geodesic sphere: subdivided icosahedron projected onto the radius."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        vlist = list(verts)

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            k = cache.get(key)
            if k is None:
                m = vlist[i] + vlist[j]
                m = m / np.linalg.norm(m)
                k = len(vlist)
                vlist.append(m)
                cache[key] = k
            return k

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)
    verts = verts * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(verts, faces)


def rescale_to_unit_cube(mesh: TriMesh) -> tuple[TriMesh, Transform]:
    """Uniform rescale: longest bounding-box axis spans [0, 1], others centered."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DataError("mesh bounding box has zero extent")
    scale = 1.0 / extent
    offset = 0.5 - (lo + hi) / 2.0 * scale
    transform = Transform(scale=scale, offset=offset)
    return TriMesh(transform.apply(mesh.vertices), mesh.triangles.copy()), transform


# ----- point-triangle distance (scalar, compiled) -----------------------------------


@numba.njit(cache=True, fastmath=False)
def _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on one triangle and the feature region that contains it."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, _REGION_A
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, _REGION_B
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return ax + t * abx, ay + t * aby, az + t * abz, _REGION_AB
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, _REGION_C
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return ax + t * acx, ay + t * acy, az + t * acz, _REGION_CA
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + t * (cx - bx), by + t * (cy - by), bz + t * (cz - bz), _REGION_BC
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w, _REGION_FACE


@numba.njit(cache=True, fastmath=False)
def _bvh_query_many(
    queries,
    bvh_min,
    bvh_max,
    bvh_left,
    bvh_right,
    bvh_start,
    bvh_count,
    bvh_order,
    tri_a,
    tri_b,
    tri_c,
):
    n = queries.shape[0]
    out_d2 = np.empty(n)
    out_tri = np.empty(n, dtype=np.int64)
    out_cp = np.empty((n, 3))
    out_region = np.empty(n, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for qi in range(n):
        px, py, pz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        best_d2 = np.inf
        best_tri = -1
        best_region = -1
        bcx = bcy = bcz = 0.0
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            dx = max(bvh_min[node, 0] - px, 0.0) + max(px - bvh_max[node, 0], 0.0)
            dy = max(bvh_min[node, 1] - py, 0.0) + max(py - bvh_max[node, 1], 0.0)
            dz = max(bvh_min[node, 2] - pz, 0.0) + max(pz - bvh_max[node, 2], 0.0)
            if dx * dx + dy * dy + dz * dz >= best_d2:
                continue
            left = bvh_left[node]
            if left < 0:  # leaf
                s = bvh_start[node]
                for k in range(bvh_count[node]):
                    t = bvh_order[s + k]
                    cx2, cy2, cz2, region = _closest_on_triangle(
                        px, py, pz,
                        tri_a[t, 0], tri_a[t, 1], tri_a[t, 2],
                        tri_b[t, 0], tri_b[t, 1], tri_b[t, 2],
                        tri_c[t, 0], tri_c[t, 1], tri_c[t, 2],
                    )
                    ddx, ddy, ddz = px - cx2, py - cy2, pz - cz2
                    d2 = ddx * ddx + ddy * ddy + ddz * ddz
                    if d2 < best_d2:
                        best_d2 = d2
                        best_tri = t
                        best_region = region
                        bcx, bcy, bcz = cx2, cy2, cz2
                continue
            right = bvh_right[node]
            # visit the nearer child first
            dlx = max(bvh_min[left, 0] - px, 0.0) + max(px - bvh_max[left, 0], 0.0)
            dly = max(bvh_min[left, 1] - py, 0.0) + max(py - bvh_max[left, 1], 0.0)
            dlz = max(bvh_min[left, 2] - pz, 0.0) + max(pz - bvh_max[left, 2], 0.0)
            drx = max(bvh_min[right, 0] - px, 0.0) + max(px - bvh_max[right, 0], 0.0)
            dry = max(bvh_min[right, 1] - py, 0.0) + max(py - bvh_max[right, 1], 0.0)
            drz = max(bvh_min[right, 2] - pz, 0.0) + max(pz - bvh_max[right, 2], 0.0)
            dl = dlx * dlx + dly * dly + dlz * dlz
            dr = drx * drx + dry * dry + drz * drz
            if dl <= dr:
                stack[top] = right
                top += 1
                stack[top] = left
                top += 1
            else:
                stack[top] = left
                top += 1
                stack[top] = right
                top += 1
        out_d2[qi] = best_d2
        out_tri[qi] = best_tri
        out_cp[qi, 0], out_cp[qi, 1], out_cp[qi, 2] = bcx, bcy, bcz
        out_region[qi] = best_region
    return out_d2, out_tri, out_cp, out_region


# ----- sign and public distance API ---------------------------------------------------


def _feature_normals(mesh: TriMesh, tri: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Pseudo-normal of the closest feature for each (triangle, region) pair."""
    n = np.empty((tri.shape[0], 3))
    face = region == _REGION_FACE
    n[face] = mesh.face_normals[tri[face]]
    for r in (_REGION_A, _REGION_B, _REGION_C):
        m = region == r
        if m.any():
            n[m] = mesh.vertex_normals[mesh.triangles[tri[m], r]]
    for r, e in ((_REGION_AB, 0), (_REGION_BC, 1), (_REGION_CA, 2)):
        m = region == r
        if m.any():
            n[m] = mesh.edge_normals[mesh.tri_edge_id[tri[m], e]]
    return n


def _sign_distances(mesh: TriMesh, queries: np.ndarray, d2, tri, cp, region) -> np.ndarray:
    normals = _feature_normals(mesh, tri, region)
    inward = np.einsum("ij,ij->i", queries - cp, normals) < 0.0
    d = np.sqrt(d2)
    d[inward] *= -1.0
    return d


def signed_distance_batch(mesh: TriMesh, queries: np.ndarray) -> np.ndarray:
    """Signed distances for an (N, 3) query block (negative inside)."""
    queries = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
    if queries.shape[1] != 3:
        raise DataError(f"queries must be (N, 3), got {queries.shape}")
    d2, tri, cp, region = _bvh_query_many(
        queries,
        mesh.bvh_min,
        mesh.bvh_max,
        mesh.bvh_left,
        mesh.bvh_right,
        mesh.bvh_start,
        mesh.bvh_count,
        mesh.bvh_order,
        mesh._tri_a,
        mesh._tri_b,
        mesh._tri_c,
    )
    return _sign_distances(mesh, queries, d2, tri, cp, region)


def signed_distance(mesh: TriMesh, q) -> float:
    """Signed distance of one point (negative inside, zero on the surface)."""
    return float(signed_distance_batch(mesh, np.asarray(q, dtype=np.float64).reshape(1, 3))[0])


def _closest_all_triangles(q: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Vectorized Ericson closest point against every triangle (oracle path)."""
    ab = b - a
    ac = c - a
    ap = q[None, :] - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = q[None, :] - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp_ = q[None, :] - c
    d5 = np.einsum("ij,ij->i", ab, cp_)
    d6 = np.einsum("ij,ij->i", ac, cp_)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    n = a.shape[0]
    cp = np.empty_like(a)
    region = np.full(n, _REGION_FACE, dtype=np.int64)
    done = np.zeros(n, dtype=bool)

    def settle(mask, points, reg):
        fresh = mask & ~done
        cp[fresh] = points[fresh] if points.ndim == 2 else points
        region[fresh] = reg
        done[fresh] = True

    settle((d1 <= 0.0) & (d2 <= 0.0), a, _REGION_A)
    settle((d3 >= 0.0) & (d4 <= d3), b, _REGION_B)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        settle((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), a + t_ab[:, None] * ab, _REGION_AB)
        settle((d6 >= 0.0) & (d5 <= d6), c, _REGION_C)
        t_ca = d2 / (d2 - d6)
        settle((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), a + t_ca[:, None] * ac, _REGION_CA)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        settle(
            (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0),
            b + t_bc[:, None] * (c - b),
            _REGION_BC,
        )
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        face_cp = a + ab * v[:, None] + ac * w[:, None]
    cp[~done] = face_cp[~done]
    return cp, region


def brute_force_distance(mesh: TriMesh, q) -> float:
    """All-triangle scan oracle: same arithmetic, no BVH, lowest index on ties."""
    q = np.asarray(q, dtype=np.float64).reshape(3)
    cp, region = _closest_all_triangles(q, mesh._tri_a, mesh._tri_b, mesh._tri_c)
    diff = q[None, :] - cp
    d2 = np.einsum("ij,ij->i", diff, diff)
    t = int(np.argmin(d2))
    d = _sign_distances(
        mesh,
        q[None, :],
        np.array([d2[t]]),
        np.array([t]),
        cp[t][None, :],
        np.array([region[t]]),
    )
    return float(d[0])


# ----- training-set sampling -----------------------------------------------------------


@dataclasses.dataclass
class SdfSampleSet:
    points: np.ndarray  # (N, 3)
    d: np.ndarray  # (N,)
    cls: np.ndarray  # (N,) 0=uniform, 1=surface, 2=perturbed
    scenario: str
    size: str
    delta: float
    seed: int
    sigma: float

    @property
    def counts(self) -> tuple[int, int, int]:
        return (
            int((self.cls == 0).sum()),
            int((self.cls == 1).sum()),
            int((self.cls == 2).sum()),
        )


def scenario_counts(scenario: str, size: str) -> tuple[int, int, int]:
    """(N1 uniform, N2 surface, N3 perturbed) for a scenario/size tag."""
    if scenario not in SCENARIOS:
        raise DataError(f"unknown scenario {scenario!r}; one of {SCENARIOS}")
    if size not in SIZES:
        raise DataError(f"unknown size {size!r}; one of {SIZES}")
    major, minor = (500_000, 40_000) if size == "large" else (100_000, 8_000)
    slot = SCENARIOS.index(scenario)  # which class receives the major budget
    counts = [minor, minor, minor]
    counts[slot] = major
    return tuple(counts)


def _surface_points(mesh: TriMesh, n: int, rng: np.random.Generator):
    """Area-weighted surface samples with their interpolation data."""
    u = rng.random(n) * mesh.cum_areas[-1]
    tri = np.searchsorted(mesh.cum_areas, u, side="right")
    tri = np.minimum(tri, mesh.nt - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    pts = w0[:, None] * a + w1[:, None] * b + w2[:, None] * c
    return pts, tri, (w0, w1, w2)


def sample_sdf_training_set(
    mesh: TriMesh, scenario: str, size: str, delta: float = 1024.0, seed: int = 0
) -> SdfSampleSet:
    """Three-class SDF training set over a unit-cube mesh.

    Class 0: N1 uniform points in [0,1]^3, exact signed distance.
    Class 1: N2 surface points sampled proportionally to triangle area, d = 0.
    Class 2: N3 surface points offset along the interpolated angle-weighted
    normal by N(0, sigma^2), sigma = 0.5/delta, exact distance recomputed.
    """
    if delta <= 0.0:
        raise DataError(f"delta must be positive, got {delta}")
    n1, n2, n3 = scenario_counts(scenario, size)
    sigma = 0.5 / float(delta)
    rng_u = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    rng_s = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    rng_p = np.random.default_rng(np.random.SeedSequence((seed, 2)))

    uniform_pts = rng_u.random((n1, 3))
    uniform_d = signed_distance_batch(mesh, uniform_pts)

    surface_pts, _, _ = _surface_points(mesh, n2, rng_s)
    surface_d = np.zeros(n2)

    base_pts, tri, (w0, w1, w2) = _surface_points(mesh, n3, rng_p)
    vn = mesh.vertex_normals
    normals = (
        w0[:, None] * vn[mesh.triangles[tri, 0]]
        + w1[:, None] * vn[mesh.triangles[tri, 1]]
        + w2[:, None] * vn[mesh.triangles[tri, 2]]
    )
    lens = np.linalg.norm(normals, axis=1)
    normals /= np.where(lens > 0.0, lens, 1.0)[:, None]
    offsets = rng_p.normal(0.0, sigma, n3)
    perturbed_pts = base_pts + offsets[:, None] * normals
    perturbed_d = signed_distance_batch(mesh, perturbed_pts)

    points = np.concatenate([uniform_pts, surface_pts, perturbed_pts], axis=0)
    d = np.concatenate([uniform_d, surface_d, perturbed_d])
    cls = np.concatenate([np.zeros(n1), np.ones(n2), np.full(n3, 2.0)]).astype(np.int64)
    return SdfSampleSet(
        points=points,
        d=d,
        cls=cls,
        scenario=scenario,
        size=size,
        delta=float(delta),
        seed=int(seed),
        sigma=sigma,
    )


def sample_set_to_dataset(samples: SdfSampleSet) -> FieldDataset:
    """Point-table view (columns x y z d class) for export and training."""
    return FieldDataset(
        coords=samples.points,
        values=np.column_stack([samples.d, samples.cls.astype(np.float64)]),
        coord_names=("x", "y", "z"),
        value_names=("d", "class"),
    )


# ----- reconstruction -----------------------------------------------------------------


@dataclasses.dataclass
class SdfCrossings:
    """Zero crossings of a predicted SDF with exact distances to the mesh."""

    points: np.ndarray  # (M, 3)
    exact_d: np.ndarray  # (M,) signed distance of each point to the source mesh
    grid_n: int


def _predict_fn(model):
    if callable(model) and not hasattr(model, "forward"):
        return lambda x: np.asarray(model(x), dtype=np.float64).reshape(-1)
    if model.config.out_dim != 1:
        raise DataError(f"SDF reconstruction needs a scalar model, got {model.config.out_dim} outputs")
    return lambda x: model.forward(x).reshape(-1)


def extract_zero_crossings(model, mesh: TriMesh, grid_n: int) -> SdfCrossings:
    """Linear-interpolation zero points of sign-changing lattice edges.

    The predicted SDF is evaluated on the ``grid_n``^3 lattice over [0,1]^3
    one z-plane at a time (memory stays O(grid_n^2)).  Crossing points are
    emitted in lattice order: per plane, x-direction edges row-major, then
    y-direction edges, then z-direction edges to the next plane.
    """
    if grid_n < 2:
        raise DataError(f"grid_n must be >= 2, got {grid_n}")
    predict = _predict_fn(model)
    axis = np.linspace(0.0, 1.0, grid_n)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    plane_xy = np.column_stack([gx.ravel(), gy.ravel()])
    points = []

    def crossings_1d(p0, f0, p1, f1):
        """Zero points between paired lattice points (rows of p0/p1)."""
        mask = (f0 * f1) < 0.0
        if not mask.any():
            return
        t = f0[mask] / (f0[mask] - f1[mask])
        points.append(p0[mask] + t[:, None] * (p1[mask] - p0[mask]))

    prev_pts = prev_f = None
    for k in range(grid_n):
        pts = np.column_stack([plane_xy, np.full(plane_xy.shape[0], axis[k])])
        f = predict(pts)
        grid_f = f.reshape(grid_n, grid_n)
        grid_p = pts.reshape(grid_n, grid_n, 3)
        # x-direction edges within the plane
        crossings_1d(
            grid_p[:-1].reshape(-1, 3),
            grid_f[:-1].ravel(),
            grid_p[1:].reshape(-1, 3),
            grid_f[1:].ravel(),
        )
        # y-direction edges within the plane
        crossings_1d(
            grid_p[:, :-1].reshape(-1, 3),
            grid_f[:, :-1].ravel(),
            grid_p[:, 1:].reshape(-1, 3),
            grid_f[:, 1:].ravel(),
        )
        # z-direction edges back to the previous plane
        if prev_f is not None:
            crossings_1d(prev_pts, prev_f, pts, f)
        prev_pts, prev_f = pts, f
    if not points:
        warnings.warn("predicted SDF has no sign change on the grid (degenerate model)", stacklevel=2)
        return SdfCrossings(points=np.zeros((0, 3)), exact_d=np.zeros(0), grid_n=grid_n)
    all_points = np.concatenate(points, axis=0)
    exact = signed_distance_batch(mesh, all_points)
    return SdfCrossings(points=all_points, exact_d=exact, grid_n=grid_n)


def crossings_to_dataset(crossings: SdfCrossings) -> FieldDataset:
    return FieldDataset(
        coords=crossings.points,
        values=crossings.exact_d.reshape(-1, 1),
        coord_names=("x", "y", "z"),
        value_names=("d",),
    )


def distance_error_stats(crossings: SdfCrossings, transform: Transform | None = None, bins: int = 32) -> dict:
    """Mean/max of |exact distance| plus a histogram, unit-cube and physical."""
    if crossings.points.shape[0] == 0:
        raise DataError("no crossing points: cannot compute distance statistics")
    err = np.abs(crossings.exact_d)
    # near-identical errors (e.g. a few symmetric crossings) cannot support
    # many distinct finite bin edges
    spread = float(err.max() - err.min())
    if spread <= np.finfo(np.float64).eps * bins * max(1.0, float(err.max())):
        bins = 1
    counts, edges = np.histogram(err, bins=bins)
    stats = {
        "n": int(err.size),
        "mean_abs": float(err.mean()),
        "max_abs": float(err.max()),
        "histogram_counts": counts,
        "histogram_edges": edges,
    }
    if transform is not None:
        stats["physical_mean_abs"] = float(err.mean() / transform.scale)
        stats["physical_max_abs"] = float(err.max() / transform.scale)
    return stats
