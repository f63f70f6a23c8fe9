
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import DATA
from logitcal.lidarmaps import (MapRange, PointCloud, ProjectionCalib, SparseMap,
                                bilateral_upsample, occupancy_path, project, read_kitti_calib,
                                read_map, read_velodyne_bin, write_map, write_velodyne_bin)

# mpmath: (0.2*2 + w*5) / (0.2 + w) with w = 1/((1+sqrt 2) * 2.5)
DIAGONAL_CASE = 3.35924551796591852959855252211

CAMERA = ProjectionCalib([[10, 0, 5, 0], [0, 10, 5, 0], [0, 0, 1, 0]], np.eye(4), (11, 11))


def sparse(shape, cells):
    v, o = np.zeros(shape), np.zeros(shape, bool)
    for (y, x), val in cells.items():
        v[y, x], o[y, x] = val, True
    return SparseMap(v, o)


# -- projection -------------------------------------------------------------------


def test_axis_point_lands_at_center():
    m = project(PointCloud([[0, 0, 10, 0.3]]), CAMERA)
    assert m.occupancy.sum() == 1 and m.values[5, 5] == 10.0
    r = project(PointCloud([[0, 0, 10, 0.3]]), CAMERA, "reflectance")
    assert r.values[5, 5] == 0.3


def test_point_behind_camera_dropped():
    assert not project(PointCloud([[0, 0, -10, 1.0]]), CAMERA).occupancy.any()


def test_nearest_point_wins_in_any_order():
    pts = [[0, 0, 9, 0.9], [0, 0, 5, 0.5], [0.01, 0, 9, 0.1]]
    for order in ([0, 1, 2], [2, 1, 0], [1, 2, 0]):
        m = project(PointCloud(np.array(pts)[order]), CAMERA, "reflectance")
        assert m.values[5, 5] == 0.5
    assert project(PointCloud(pts), CAMERA).values[5, 5] == 5.0


def test_out_of_image_and_empty_cloud():
    assert not project(PointCloud([[100, 0, 1, 1]]), CAMERA).occupancy.any()
    assert not project(PointCloud(np.empty((0, 4))), CAMERA).occupancy.any()


def test_calib_validation():
    with pytest.raises(ValueError):
        ProjectionCalib(np.eye(3, 4), np.eye(4), (0, 5))
    with pytest.raises(ValueError):
        ProjectionCalib(np.full((3, 4), np.nan), np.eye(4), (5, 5))
    with pytest.raises(ValueError):
        PointCloud([[np.inf, 0, 0, 0]])


def test_kitti_calib_folds_rectification():
    calib = read_kitti_calib(DATA / "calib.txt", (40, 24))
    # LiDAR x forward becomes camera z
    np.testing.assert_array_equal(calib.Tr @ [10, 0, 0, 1], [0, 0, 10, 1])
    assert calib.image_size == (40, 24)


def test_velodyne_round_trip(tmp_path):
    cloud = read_velodyne_bin(DATA / "scan.bin")
    write_velodyne_bin(cloud, tmp_path / "c.bin")
    assert (tmp_path / "c.bin").read_bytes() == (DATA / "scan.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"\0" * 6)
    with pytest.raises(ValueError):
        read_velodyne_bin(tmp_path / "bad.bin")


# -- bilateral filter -------------------------------------------------------------


def test_constant_neighborhood_exact():
    r = np.random.default_rng(0)
    occ = r.uniform(size=(30, 30)) < 0.2
    out = bilateral_upsample(SparseMap(np.full((30, 30), 7.3), occ))
    assert np.all(out.values[out.occupancy] == 7.3)


def test_single_neighbor_returns_its_value():
    out = bilateral_upsample(sparse((7, 7), {(2, 5): 4.25}), 13)
    assert np.all(out.occupancy) and np.all(out.values == 4.25)


def test_two_symmetric_neighbors():
    out = bilateral_upsample(sparse((3, 3), {(1, 0): 2.0, (1, 2): 4.0}), 3)
    assert abs(out.values[1, 1] - 3.0) <= 1e-12


def test_diagonal_neighbor_case():
    out = bilateral_upsample(sparse((3, 3), {(1, 0): 2.0, (0, 2): 5.0}), 3)
    assert abs(out.values[1, 1] - DIAGONAL_CASE) <= 1e-12


def test_occupied_center_case():
    # r0 = 1 (own value); weights 1, 1/4, 1/8 -> (1 + 0.5 + 0.5) / 1.375
    out = bilateral_upsample(sparse((3, 3), {(1, 1): 1.0, (1, 0): 2.0, (1, 2): 4.0}), 3)
    assert abs(out.values[1, 1] - 16 / 11) <= 1e-12


def test_default_mask_is_13():
    import inspect
    assert inspect.signature(bilateral_upsample).parameters["mask_size"].default == 13
    # a neighbor 6 pixels away is reached by the default mask, 7 away is not
    out = bilateral_upsample(sparse((1, 15), {(0, 0): 1.0}))
    assert out.occupancy[0, 6] and not out.occupancy[0, 7]


def test_far_pixels_stay_empty_and_bad_mask():
    out = bilateral_upsample(sparse((1, 10), {(0, 0): 1.0}), 3)
    assert out.occupancy.tolist()[0] == [True, True] + [False] * 8
    for bad in (4, 0, -3):
        with pytest.raises(ValueError):
            bilateral_upsample(sparse((3, 3), {(0, 0): 1.0}), bad)
    with pytest.raises(ValueError):
        bilateral_upsample(sparse((3, 3), {(0, 0): 1.0}), 3, iterations=0)


def test_iterations_feed_back():
    s = sparse((1, 9), {(0, 0): 1.0})
    once = bilateral_upsample(s, 3)
    twice = bilateral_upsample(s, 3, iterations=2)
    assert once.occupancy.sum() == 2 and twice.occupancy.sum() == 3
    assert bilateral_upsample(once, 3).values.tolist() == twice.values.tolist()


sparse_maps = st.integers(5, 14).flatmap(lambda n: st.tuples(
    arrays(float, (n, n), elements=st.floats(0, 80)),
    arrays(bool, (n, n), elements=st.booleans())))


@settings(max_examples=80, deadline=None)
@given(sparse_maps, st.sampled_from([1, 3, 5]))
def test_convex_combination(vo, c):
    v, o = vo
    smap = SparseMap(v, o)
    out = bilateral_upsample(smap, c)
    h = c // 2
    for y, x in zip(*np.nonzero(o)):
        win = smap.masked()[max(0, y - h):y + h + 1, max(0, x - h):x + h + 1]
        lo, hi = np.nanmin(win), np.nanmax(win)
        assert lo - 1e-9 <= out.values[y, x] <= hi + 1e-9


@settings(max_examples=60, deadline=None)
@given(arrays(float, (8, 8), elements=st.floats(0, 50)),
       arrays(bool, (8, 8), elements=st.booleans()), st.integers(1, 4), st.integers(1, 4))
def test_translation_equivariance(v, o, dy, dx):
    big_v, big_o = np.zeros((20, 20)), np.zeros((20, 20), bool)
    big_v[6:14, 6:14], big_o[6:14, 6:14] = v, o
    sh_v, sh_o = np.roll(big_v, (dy, dx), (0, 1)), np.roll(big_o, (dy, dx), (0, 1))
    a = bilateral_upsample(SparseMap(big_v, big_o), 3)
    b = bilateral_upsample(SparseMap(sh_v, sh_o), 3)
    np.testing.assert_array_equal(np.roll(a.occupancy, (dy, dx), (0, 1)), b.occupancy)
    np.testing.assert_allclose(np.roll(a.values, (dy, dx), (0, 1)), b.values, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(sparse_maps)
def test_distance_only_is_linear(vo):
    v, o = vo
    a = bilateral_upsample(SparseMap(v, o), 5, range_weight=False)
    b = bilateral_upsample(SparseMap(2 * v, o), 5, range_weight=False)
    np.testing.assert_allclose(b.values, 2 * a.values, rtol=1e-12, atol=1e-12)


def test_range_weight_breaks_linearity():
    s = sparse((3, 3), {(1, 0): 2.0, (0, 2): 5.0, (2, 2): 9.0})
    d = sparse((3, 3), {(1, 0): 4.0, (0, 2): 10.0, (2, 2): 18.0})
    a, b = bilateral_upsample(s, 3), bilateral_upsample(d, 3)
    assert abs(b.values[1, 1] - 2 * a.values[1, 1]) > 1e-3


# -- map files --------------------------------------------------------------------


def test_two_by_two_round_trip(tmp_path):
    m = SparseMap(np.array([[0.0, 50.0], [25.0, 12.5]]), np.ones((2, 2), bool))
    write_map(m, tmp_path / "m.pgm", rng=MapRange(0.0, 50.0))
    back = read_map(tmp_path / "m.pgm")
    assert back.values[0, 0] == 0.0 and back.values[0, 1] == 50.0
    np.testing.assert_allclose(back.values, m.values, atol=50 / 65535 / 2)


def test_empty_map_file(tmp_path):
    write_map(SparseMap.empty(4, 3), tmp_path / "e.pgm")
    raw = (tmp_path / "e.pgm").read_bytes()
    assert raw.endswith(b"\0" * 24)
    assert not read_map(tmp_path / "e.pgm").occupancy.any()
    assert (tmp_path / "e.occ.pgm").exists() and occupancy_path("a/b.png") == "a/b.occ.pgm"


@pytest.mark.parametrize("fmt,ext", [("pgm16", "pgm"), ("png16", "png"), ("csv", "csv")])
def test_random_map_round_trip_bytes(tmp_path, fmt, ext):
    r = np.random.default_rng(64)
    m = SparseMap(r.uniform(0, 80, (64, 64)), r.uniform(size=(64, 64)) < 0.6)
    write_map(m, tmp_path / f"a.{ext}", fmt)
    back = read_map(tmp_path / f"a.{ext}")
    np.testing.assert_array_equal(back.occupancy, m.occupancy)
    tol = 0 if fmt == "csv" else np.ptp(m.values[m.occupancy]) / 65535
    np.testing.assert_allclose(back.values, m.values, atol=tol, rtol=0)
    write_map(back, tmp_path / f"b.{ext}", fmt)
    assert (tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        write_map(SparseMap.empty(2, 2), tmp_path / "x.tif", "tiff")


def test_sparse_map_invariants():
    m = SparseMap(np.array([[5.0, 6.0]]), np.array([[True, False]]))
    assert m.values.tolist() == [[5.0, 0.0]]
    with pytest.raises(ValueError):
        SparseMap(np.array([[np.nan]]), np.array([[True]]))


def test_fixture_matches_golden():
    calib = read_kitti_calib(DATA / "calib.txt", (40, 24))
    dense = bilateral_upsample(project(read_velodyne_bin(DATA / "scan.bin"), calib), 5)
    golden = read_map(DATA / "golden_depth.pgm")
    np.testing.assert_array_equal(dense.occupancy, golden.occupancy)
    span = np.ptp(dense.values[dense.occupancy])
    assert np.max(np.abs(dense.values - golden.values)) <= span / 65535 / 2 + 1e-12
