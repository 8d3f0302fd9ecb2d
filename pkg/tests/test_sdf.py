"""Signed-distance engine: mesh loading, sign correctness, sampling, crossings."""

import numpy as np
import pytest

from nrfield.fielddata import DataError
from nrfield.sdf import (
    SdfCrossings,
    TriMesh,
    Transform,
    brute_force_distance,
    distance_error_stats,
    extract_zero_crossings,
    load_trimesh,
    make_icosphere,
    rescale_to_unit_cube,
    sample_sdf_training_set,
    sample_set_to_dataset,
    scenario_counts,
    signed_distance,
    signed_distance_batch,
)

CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def _cube_mesh(tmp_path) -> TriMesh:
    return load_trimesh(_write(tmp_path, "cube.obj", CUBE_OBJ))


def _cube_stl_text() -> str:
    mesh = TriMesh(
        np.array(
            [
                [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
            ],
            dtype=np.float64,
        ),
        np.array(
            [
                [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
                [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
                [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
            ]
        ),
    )
    lines = ["solid cube"]
    for t in range(mesh.nt):
        n = mesh.face_normals[t]
        lines.append(f"  facet normal {n[0]} {n[1]} {n[2]}")
        lines.append("    outer loop")
        for k in range(3):
            v = mesh.vertices[mesh.triangles[t, k]]
            lines.append(f"      vertex {v[0]} {v[1]} {v[2]}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append("endsolid cube")
    return "\n".join(lines) + "\n"


# ----- loading -------------------------------------------------------------


def test_cube_obj_loads_with_expected_counts(tmp_path):
    mesh = _cube_mesh(tmp_path)
    assert mesh.nv == 8
    assert mesh.nt == 12
    assert mesh.watertight
    assert mesh.oriented_consistently
    assert mesh.boundary_edges == 0
    assert mesh.face_areas.sum() == pytest.approx(6.0, abs=1e-12)


def test_obj_face_with_slashes_and_comments(tmp_path):
    text = "# hi\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n"
    mesh = load_trimesh(_write(tmp_path, "t.obj", text))
    assert mesh.nv == 3 and mesh.nt == 1


def test_obj_rejects_quads_and_empty(tmp_path):
    quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
    with pytest.raises(DataError, match="triangles only"):
        load_trimesh(_write(tmp_path, "q.obj", quad))
    with pytest.raises(DataError, match="no triangles"):
        load_trimesh(_write(tmp_path, "e.obj", "v 0 0 0\n"))


def test_obj_rejects_bad_indices_and_degenerate(tmp_path):
    with pytest.raises(DataError, match="out of vertex range"):
        load_trimesh(_write(tmp_path, "r.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"))
    degen = "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"
    with pytest.raises(DataError, match="degenerate"):
        load_trimesh(_write(tmp_path, "d.obj", degen))


def test_stl_welds_repeated_vertices_to_cube(tmp_path):
    mesh = load_trimesh(_write(tmp_path, "cube.stl", _cube_stl_text()))
    assert mesh.nv == 8
    assert mesh.nt == 12
    assert mesh.watertight


def test_stl_rejects_partial_triangle_and_junk_record(tmp_path):
    bad = "solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nendloop\nendfacet\nendsolid x\n"
    with pytest.raises(DataError, match="multiple of 3"):
        load_trimesh(_write(tmp_path, "b.stl", bad))
    junk = "solid x\nwibble 1 2 3\nendsolid x\n"
    with pytest.raises(DataError, match="unexpected STL record"):
        load_trimesh(_write(tmp_path, "j.stl", junk))


def test_mesh_with_missing_face_is_not_watertight(tmp_path):
    full = _cube_mesh(tmp_path)
    holed = TriMesh(full.vertices, full.triangles[:-1])
    assert not holed.watertight
    assert holed.boundary_edges == 3


# ----- signed distance: hand geometry --------------------------------------


def test_cube_center_and_outside_distances(tmp_path):
    mesh = _cube_mesh(tmp_path)
    assert signed_distance(mesh, (0.5, 0.5, 0.5)) == pytest.approx(-0.5, abs=1e-12)
    assert signed_distance(mesh, (2.0, 0.5, 0.5)) == pytest.approx(1.0, abs=1e-12)
    assert signed_distance(mesh, (0.5, 0.5, 0.25)) == pytest.approx(-0.25, abs=1e-12)


def test_cube_corner_and_edge_regions_signed_positive(tmp_path):
    mesh = _cube_mesh(tmp_path)
    # closest feature is the corner (1,1,1): vertex pseudo-normal signs it
    assert signed_distance(mesh, (2.0, 2.0, 2.0)) == pytest.approx(np.sqrt(3.0), abs=1e-12)
    # closest feature is the edge x=1, y=1
    assert signed_distance(mesh, (2.0, 2.0, 0.5)) == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_on_surface_points_have_zero_distance(tmp_path):
    mesh = _cube_mesh(tmp_path)
    for q in [(0.0, 0.0, 0.0), (0.5, 0.5, 0.0), (1.0, 0.25, 0.75)]:
        assert abs(signed_distance(mesh, q)) < 1e-12


def test_batch_matches_scalar(tmp_path):
    mesh = _cube_mesh(tmp_path)
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.5, 1.5, (64, 3))
    batch = signed_distance_batch(mesh, pts)
    each = np.array([signed_distance(mesh, p) for p in pts])
    np.testing.assert_array_equal(batch, each)


# ----- BVH vs brute force ----------------------------------------------------


def test_bvh_matches_brute_force_on_icosphere():
    mesh = make_icosphere(2)
    rng = np.random.default_rng(123)
    pts = rng.uniform(-0.2, 1.2, (1000, 3))
    fast = signed_distance_batch(mesh, pts)
    slow = np.array([brute_force_distance(mesh, p) for p in pts])
    assert np.max(np.abs(np.abs(fast) - np.abs(slow))) < 1e-12
    np.testing.assert_array_equal(np.sign(fast), np.sign(slow))


def test_bvh_matches_brute_force_on_cube(tmp_path):
    mesh = _cube_mesh(tmp_path)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1.0, 2.0, (500, 3))
    fast = signed_distance_batch(mesh, pts)
    slow = np.array([brute_force_distance(mesh, p) for p in pts])
    assert np.max(np.abs(np.abs(fast) - np.abs(slow))) < 1e-12
    np.testing.assert_array_equal(np.sign(fast), np.sign(slow))


def _ray_parity_inside(mesh, pts, rng):
    """Crossing-parity oracle: odd intersection count along a random ray."""
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    a = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - a
    e2 = mesh.vertices[mesh.triangles[:, 2]] - a
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    inside = np.empty(pts.shape[0], dtype=bool)
    for i, q in enumerate(pts):
        s = q[None, :] - a
        u = np.einsum("ij,ij->i", s, p) * inv
        t1 = np.cross(s, e1)
        v = (t1 @ d) * inv
        t = np.einsum("ij,ij->i", e2, t1) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
        inside[i] = bool(hit.sum() % 2)
    return inside


def test_sign_agrees_with_ray_parity():
    mesh = make_icosphere(2)
    rng = np.random.default_rng(99)
    pts = rng.uniform(-0.1, 1.1, (400, 3))
    d = signed_distance_batch(mesh, pts)
    clear = np.abs(d) > 1e-3  # skip near-surface points where parity is fragile
    inside = _ray_parity_inside(mesh, pts[clear], rng)
    np.testing.assert_array_equal(d[clear] < 0, inside)


# ----- icosphere + rescale ------------------------------------------------


def test_icosphere_radius_center_and_topology():
    mesh = make_icosphere(3, radius=0.5, center=(0.5, 0.5, 0.5))
    radii = np.linalg.norm(mesh.vertices - 0.5, axis=1)
    np.testing.assert_allclose(radii, 0.5, atol=1e-12)
    assert mesh.watertight
    # closed genus-0 surface: V - E + F = 2
    n_edges = mesh.edge_normals.shape[0]
    assert mesh.nv - n_edges + mesh.nt == 2
    assert signed_distance(mesh, (0.5, 0.5, 0.5)) == pytest.approx(-0.5, abs=3e-3)
    assert signed_distance(mesh, (0.5, 0.5, 1.4)) == pytest.approx(0.4, abs=3e-3)


def test_rescale_to_unit_cube_roundtrip():
    rng = np.random.default_rng(11)
    verts = rng.normal(size=(30, 3)) * np.array([5.0, 2.0, 1.0]) + np.array([10.0, -4.0, 7.0])
    tris = np.array([[i, i + 1, i + 2] for i in range(0, 27, 3)])
    mesh = TriMesh(verts, tris)
    unit, tf = rescale_to_unit_cube(mesh)
    lo, hi = unit.vertices.min(axis=0), unit.vertices.max(axis=0)
    assert np.all(lo >= -1e-12) and np.all(hi <= 1.0 + 1e-12)
    spans = hi - lo
    assert spans.max() == pytest.approx(1.0, abs=1e-12)
    back = tf.invert(tf.apply(mesh.vertices))
    assert np.max(np.abs(back - mesh.vertices)) < 1e-12


def test_rescale_rejects_degenerate_bbox():
    # all vertices identical in every axis extent
    verts = np.zeros((3, 3))
    with pytest.raises(DataError):
        TriMesh(verts, np.array([[0, 1, 2]]))  # degenerate triangle raises first


# ----- training-set sampling ------------------------------------------------


def test_scenario_counts_table():
    assert scenario_counts("MSS", "large") == (500_000, 40_000, 40_000)
    assert scenario_counts("SMS", "large") == (40_000, 500_000, 40_000)
    assert scenario_counts("SSM", "large") == (40_000, 40_000, 500_000)
    assert scenario_counts("MSS", "small") == (100_000, 8_000, 8_000)
    assert scenario_counts("SMS", "small") == (8_000, 100_000, 8_000)
    assert scenario_counts("SSM", "small") == (8_000, 8_000, 100_000)
    with pytest.raises(DataError, match="scenario"):
        scenario_counts("MMM", "large")
    with pytest.raises(DataError, match="size"):
        scenario_counts("MSS", "medium")


def test_sample_set_counts_classes_and_sigma():
    mesh = make_icosphere(2)
    s = sample_sdf_training_set(mesh, "SMS", "small", delta=1024.0, seed=3)
    assert s.counts == (8_000, 100_000, 8_000)
    assert s.points.shape == (116_000, 3)
    assert s.sigma == pytest.approx(0.5 / 1024.0, rel=0, abs=0)
    # surface class has exactly zero labels
    np.testing.assert_array_equal(s.d[s.cls == 1], 0.0)
    # perturbed labels have std close to sigma (exact recomputed distances)
    perturbed = s.d[s.cls == 2]
    assert np.std(perturbed) == pytest.approx(s.sigma, rel=0.05)
    # uniform points stay in the unit cube and get exact distances
    uni = s.points[s.cls == 0]
    assert uni.min() >= 0.0 and uni.max() <= 1.0
    check = signed_distance_batch(mesh, uni[:100])
    np.testing.assert_array_equal(check, s.d[s.cls == 0][:100])


def test_sampling_is_deterministic_and_seed_sensitive():
    mesh = make_icosphere(1)
    a = sample_sdf_training_set(mesh, "MSS", "small", seed=5)
    b = sample_sdf_training_set(mesh, "MSS", "small", seed=5)
    c = sample_sdf_training_set(mesh, "MSS", "small", seed=6)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.d, b.d)
    assert not np.array_equal(a.points, c.points)


def test_surface_sampling_is_area_weighted():
    # two disjoint triangles with areas 1 and 3
    verts = np.array(
        [
            [0, 0, 0], [1, 0, 0], [0, 2, 0],
            [5, 0, 0], [7, 0, 0], [5, 3, 0],
        ],
        dtype=np.float64,
    )
    mesh = TriMesh(verts, np.array([[0, 1, 2], [3, 4, 5]]))
    assert mesh.face_areas == pytest.approx([1.0, 3.0])
    s = sample_sdf_training_set(mesh, "SMS", "small", seed=0)
    surf = s.points[s.cls == 1]
    n = surf.shape[0]
    on_small = int((surf[:, 0] < 3.0).sum())
    expected = n * 0.25
    sd = np.sqrt(n * 0.25 * 0.75)
    assert abs(on_small - expected) < 5 * sd


def test_delta_controls_sigma_only():
    mesh = make_icosphere(1)
    s1 = sample_sdf_training_set(mesh, "MSS", "small", delta=1024.0, seed=2)
    s2 = sample_sdf_training_set(mesh, "MSS", "small", delta=256.0, seed=2)
    # same uniform and surface points, different perturbation scale
    np.testing.assert_array_equal(s1.points[s1.cls == 0], s2.points[s2.cls == 0])
    np.testing.assert_array_equal(s1.points[s1.cls == 1], s2.points[s2.cls == 1])
    assert np.std(s2.d[s2.cls == 2]) == pytest.approx(4 * np.std(s1.d[s1.cls == 2]), rel=0.1)
    with pytest.raises(DataError, match="delta"):
        sample_sdf_training_set(mesh, "MSS", "small", delta=0.0)


def test_sample_set_to_dataset_columns():
    mesh = make_icosphere(1)
    s = sample_sdf_training_set(mesh, "MSS", "small", seed=1)
    ds = sample_set_to_dataset(s)
    assert ds.coord_names == ("x", "y", "z")
    assert ds.value_names == ("d", "class")
    assert ds.n == 116_000
    np.testing.assert_array_equal(ds.values[:, 1], s.cls.astype(np.float64))


# ----- zero crossings --------------------------------------------------------


def _analytic_sphere(x):
    return np.linalg.norm(np.asarray(x) - 0.5, axis=1) - 0.5


def test_zero_crossings_lie_on_sphere_within_sag_bound():
    mesh = make_icosphere(4)
    grid_n = 24
    crossings = extract_zero_crossings(_analytic_sphere, mesh, grid_n)
    assert crossings.points.shape[0] > 1000
    h = 1.0 / (grid_n - 1)
    radial = np.abs(np.linalg.norm(crossings.points - 0.5, axis=1) - 0.5)
    assert radial.max() < 1.5 * h * h
    # exact distances to the faceted mesh add at most the facet sag
    assert np.abs(crossings.exact_d).max() < 1.5 * h * h + 2e-4


def test_zero_crossings_deterministic_order_and_sign_flip_invariant():
    mesh = make_icosphere(1)
    a = extract_zero_crossings(_analytic_sphere, mesh, 12)
    b = extract_zero_crossings(_analytic_sphere, mesh, 12)
    np.testing.assert_array_equal(a.points, b.points)
    flipped = extract_zero_crossings(lambda x: -_analytic_sphere(x), mesh, 12)
    np.testing.assert_array_equal(a.points, flipped.points)


def test_zero_crossings_empty_warns():
    mesh = make_icosphere(1)
    with pytest.warns(UserWarning, match="no sign change"):
        out = extract_zero_crossings(lambda x: np.ones(x.shape[0]), mesh, 8)
    assert out.points.shape == (0, 3)
    assert out.exact_d.shape == (0,)


def test_zero_crossings_rejects_tiny_grid():
    mesh = make_icosphere(1)
    with pytest.raises(DataError, match="grid_n"):
        extract_zero_crossings(_analytic_sphere, mesh, 1)


# ----- error statistics -------------------------------------------------------


def test_distance_error_stats_hand_values():
    crossings = SdfCrossings(
        points=np.zeros((2, 3)), exact_d=np.array([1.0, -3.0]), grid_n=4
    )
    stats = distance_error_stats(crossings, bins=4)
    assert stats["n"] == 2
    assert stats["mean_abs"] == pytest.approx(2.0)
    assert stats["max_abs"] == pytest.approx(3.0)
    assert stats["histogram_counts"].sum() == 2


def test_distance_error_stats_physical_units():
    crossings = SdfCrossings(
        points=np.zeros((2, 3)), exact_d=np.array([1.0, -3.0]), grid_n=4
    )
    tf = Transform(scale=0.5, offset=np.zeros(3))
    stats = distance_error_stats(crossings, transform=tf)
    assert stats["physical_mean_abs"] == pytest.approx(4.0)
    assert stats["physical_max_abs"] == pytest.approx(6.0)


def test_distance_error_stats_rejects_empty():
    empty = SdfCrossings(points=np.zeros((0, 3)), exact_d=np.zeros(0), grid_n=4)
    with pytest.raises(DataError, match="no crossing points"):
        distance_error_stats(empty)
