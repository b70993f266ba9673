"""Point-cloud primitives: transforms, Chamfer distances, neighbor queries."""

import numpy as np
import pytest

import propsuites as ps
from partwarp.geom import (
    NeighborIndex,
    PointCloud,
    RigidTransform,
    adjacency_label_values,
    apply_transform,
    chamfer,
    cloud_from_dict,
    cloud_to_dict,
    compose,
    knn,
    labeled_chamfer,
    load_cloud,
    rotation_about_axis,
    rotation_geodesic,
    save_cloud,
    symmetric_chamfer,
    transform_from_dict,
    transform_to_dict,
    z_label_values,
)


def brute_chamfer(x: np.ndarray, y: np.ndarray) -> float:
    total = 0.0
    for p in x:
        best = min(float(np.sum((p - q) ** 2)) for q in y)
        total += best
    return total / len(x)


def random_labeled_cloud(rng, n, keys=("z",)):
    pts = rng.normal(size=(n, 3))
    labels = {}
    for key in keys:
        values = rng.integers(0, 2, size=n)
        values[0] = 0
        values[-1] = 1
        labels[key] = values
    return PointCloud(pts, labels)


class TestPointCloud:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError, match="shape"):
            PointCloud(np.zeros((4, 2)))
        with pytest.raises(ValueError, match="finite"):
            PointCloud(np.array([[0.0, 0.0, np.nan]]))

    def test_rejects_mismatched_labels(self):
        with pytest.raises(ValueError, match="length"):
            PointCloud(np.zeros((3, 3)), {"z": [0, 1]})
        with pytest.raises(ValueError, match="0 or 1"):
            PointCloud(np.zeros((2, 3)), {"z": [0, 2]})

    def test_label_access_and_keys(self, rng):
        cloud = random_labeled_cloud(rng, 10, keys=("z", "adj:x"))
        assert cloud.label_keys() == ("adj:x", "z")
        assert cloud.label("z").shape == (10,)
        with pytest.raises(KeyError):
            cloud.label("missing")

    def test_subset_carries_labels(self, rng):
        cloud = random_labeled_cloud(rng, 12)
        sub = cloud.subset([0, 3, 5])
        assert len(sub) == 3
        np.testing.assert_array_equal(sub.label("z"), cloud.label("z")[[0, 3, 5]])

    def test_extent_is_bbox_diagonal(self):
        cloud = PointCloud(np.array([[0.0, 0, 0], [1, 2, 2]]))
        assert cloud.extent() == pytest.approx(3.0)


class TestRigidTransform:
    def test_validation(self):
        with pytest.raises(ValueError, match="orthonormal"):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))
        with pytest.raises(ValueError, match="determinant"):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_apply_identity_returns_same_points(self, rng):
        cloud = random_labeled_cloud(rng, 20)
        out = apply_transform(RigidTransform.identity(), cloud)
        np.testing.assert_allclose(out.points, cloud.points, atol=1e-15)
        np.testing.assert_array_equal(out.label("z"), cloud.label("z"))

    def test_apply_translation(self):
        t = RigidTransform(np.eye(3), np.array([1.0, 0.0, 0.0]))
        out = apply_transform(t, PointCloud(np.zeros((1, 3))))
        np.testing.assert_allclose(out.points, [[1.0, 0.0, 0.0]])

    def test_apply_quarter_turn(self):
        t = RigidTransform(rotation_about_axis(np.array([0, 0, 1.0]), np.pi / 2), np.zeros(3))
        out = apply_transform(t, PointCloud(np.array([[1.0, 0.0, 0.0]])))
        np.testing.assert_allclose(out.points, [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_compose_with_inverse_is_identity(self, rng):
        t = ps.random_transform(rng)
        ident = compose(t, t.inverse())
        assert rotation_geodesic(ident, RigidTransform.identity()) < 1e-12
        assert np.linalg.norm(ident.translation) < 1e-12

    def test_compose_identity_is_noop(self, rng):
        t = ps.random_transform(rng)
        out = compose(RigidTransform.identity(), t)
        np.testing.assert_allclose(out.rotation, t.rotation, atol=1e-15)
        np.testing.assert_allclose(out.translation, t.translation, atol=1e-15)

    def test_compose_matches_sequential_application(self, rng):
        t1, t2 = ps.random_transform(rng), ps.random_transform(rng)
        pts = rng.normal(size=(100, 3))
        np.testing.assert_allclose(
            compose(t1, t2).apply(pts), t1.apply(t2.apply(pts)), atol=1e-12
        )

    def test_rotation_geodesic_recovers_angle(self, rng):
        for angle in (0.0, 0.3, 1.2, np.pi - 1e-6):
            rot = rotation_about_axis(rng.normal(size=3), angle)
            assert rotation_geodesic(rot, np.eye(3)) == pytest.approx(angle, abs=1e-7)

    def test_isometry_property_suite(self):
        assert ps.transform_isometry_suite(n_cases=120) == []


class TestChamfer:
    def test_self_distance_vanishes(self, rng):
        cloud = PointCloud(rng.normal(size=(30, 3)))
        assert 0.0 <= chamfer(cloud, cloud) < 1e-12

    def test_single_pair_squared_distance(self):
        x = PointCloud(np.zeros((1, 3)))
        y = PointCloud(np.array([[1.0, 0.0, 0.0]]))
        assert chamfer(x, y) == pytest.approx(1.0)

    def test_empty_cloud_rejected(self, rng):
        cloud = PointCloud(rng.normal(size=(4, 3)))
        with pytest.raises(ValueError, match="empty cloud"):
            chamfer(cloud, cloud.subset([]))

    def test_matches_brute_force(self, rng):
        for _ in range(100):
            x = rng.normal(size=(int(rng.integers(2, 40)), 3))
            y = rng.normal(size=(int(rng.integers(2, 40)), 3))
            got = chamfer(PointCloud(x), PointCloud(y))
            assert abs(got - brute_chamfer(x, y)) < 1e-10

    def test_symmetric_variant_sums_both_directions(self, rng):
        x = PointCloud(rng.normal(size=(15, 3)))
        y = PointCloud(rng.normal(size=(22, 3)))
        assert symmetric_chamfer(x, y) == pytest.approx(chamfer(x, y) + chamfer(y, x))
        assert symmetric_chamfer(x, y) == symmetric_chamfer(y, x)

    def test_nonnegative_and_zero_iff_covered(self, rng):
        x = PointCloud(rng.normal(size=(10, 3)))
        y = PointCloud(np.concatenate([x.points, rng.normal(size=(5, 3))]))
        assert chamfer(x, y) <= 1e-12
        assert chamfer(y, x) > 1e-6


class TestLabeledChamfer:
    def test_self_distance_vanishes(self, rng):
        cloud = random_labeled_cloud(rng, 25)
        assert 0.0 <= labeled_chamfer(cloud, cloud, "z") < 1e-12

    def test_cross_label_matching_forbidden(self):
        x = PointCloud(np.array([[0.0, 0, 0], [1.0, 0, 0]]), {"z": [0, 1]})
        y = PointCloud(np.array([[0.0, 0, 0], [1.0, 0, 0]]), {"z": [1, 0]})
        assert labeled_chamfer(x, y, "z") == pytest.approx(2.0)

    def test_constant_labels_reduce_to_plain_chamfer(self, rng):
        for _ in range(20):
            x = rng.normal(size=(int(rng.integers(2, 30)), 3))
            y = rng.normal(size=(int(rng.integers(2, 30)), 3))
            lx = PointCloud(x, {"z": np.ones(len(x), dtype=int)})
            ly = PointCloud(y, {"z": np.ones(len(y), dtype=int)})
            assert labeled_chamfer(lx, ly, "z") == chamfer(PointCloud(x), PointCloud(y))

    def test_matches_per_class_brute_force(self, rng):
        for _ in range(100):
            x = random_labeled_cloud(rng, int(rng.integers(4, 30)))
            y = random_labeled_cloud(rng, int(rng.integers(4, 30)))
            expected = 0.0
            for value in (0, 1):
                mx = x.label("z") == value
                my = y.label("z") == value
                if not mx.any():
                    continue
                expected += brute_chamfer(x.points[mx], y.points[my])
            got = labeled_chamfer(x, y, "z")
            assert abs(got - expected) < 1e-10

    def test_unmatched_class_rejected(self, rng):
        x = random_labeled_cloud(rng, 10)
        y = PointCloud(rng.normal(size=(8, 3)), {"z": np.zeros(8, dtype=int)})
        with pytest.raises(ValueError, match="unmatched label class"):
            labeled_chamfer(x, y, "z")

    def test_rigid_invariance(self, rng):
        x = random_labeled_cloud(rng, 40)
        y = random_labeled_cloud(rng, 35)
        base = labeled_chamfer(x, y, "z")
        for _ in range(10):
            t = ps.random_transform(rng)
            moved = labeled_chamfer(apply_transform(t, x), apply_transform(t, y), "z")
            assert abs(moved - base) < 1e-9


class TestKnn:
    def test_two_point_example(self):
        index = NeighborIndex(PointCloud(np.array([[0.0, 0, 0], [2.0, 0, 0]])))
        assert knn(index, np.array([0.5, 0, 0]), 1) == [(0, pytest.approx(0.5))]

    def test_query_on_cloud_point(self, rng):
        pts = rng.normal(size=(20, 3))
        index = NeighborIndex(PointCloud(pts))
        hit = knn(index, pts[7], 1)
        assert hit[0][0] == 7
        assert hit[0][1] == pytest.approx(0.0, abs=1e-12)

    def test_tie_breaks_by_lowest_index(self):
        index = NeighborIndex(PointCloud(np.array([[1.0, 0, 0], [-1.0, 0, 0]])))
        out = knn(index, np.zeros(3), 2)
        assert [i for i, _ in out] == [0, 1]

    def test_k_clamped_to_cloud_size(self, rng):
        index = NeighborIndex(PointCloud(rng.normal(size=(5, 3))))
        assert len(knn(index, np.zeros(3), 12)) == 5
        with pytest.raises(ValueError, match="k must be"):
            knn(index, np.zeros(3), 0)

    def test_matches_exhaustive_search(self, rng):
        pts = rng.normal(size=(500, 3))
        index = NeighborIndex(PointCloud(pts))
        for _ in range(25):
            q = rng.normal(size=3)
            got = knn(index, q, 5)
            dists = np.linalg.norm(pts - q, axis=1)
            order = np.lexsort((np.arange(len(pts)), dists))[:5]
            assert [i for i, _ in got] == list(order)
            np.testing.assert_allclose([d for _, d in got], dists[order], rtol=1e-12)


class TestLabelGenerators:
    def test_z_label_marks_lower_half(self):
        pts = np.array([[0, 0, 0.0], [0, 0, 1.0], [0, 0, 4.0]])
        np.testing.assert_array_equal(z_label_values(PointCloud(pts)), [1, 1, 0])

    def test_adjacency_label_marks_relatively_near_points(self):
        # Threshold is ratio times the median nearest-neighbor distance, so
        # the two touching points stand out against the spread-out rest.
        xs = np.array([0.0, 0.5, 3.0, 3.5, 4.0, 4.5, 5.0])
        part = PointCloud(np.stack([xs, np.zeros(7), np.zeros(7)], axis=1))
        other = PointCloud(np.array([[0.0, 0.01, 0], [0.5, 0.01, 0]]))
        values = adjacency_label_values(part, other, ratio=0.4)
        np.testing.assert_array_equal(values, [1, 1, 0, 0, 0, 0, 0])
        assert values.dtype.kind == "i"


class TestSerialization:
    def test_cloud_round_trip_is_exact(self, rng):
        cloud = random_labeled_cloud(rng, 17, keys=("z", "adj:peg"))
        back = cloud_from_dict(cloud_to_dict(cloud))
        np.testing.assert_array_equal(back.points, cloud.points)
        assert back.label_keys() == cloud.label_keys()
        for key in cloud.label_keys():
            np.testing.assert_array_equal(back.label(key), cloud.label(key))

    def test_cloud_file_round_trip(self, rng, tmp_path):
        cloud = random_labeled_cloud(rng, 9)
        save_cloud(tmp_path / "c.json", cloud)
        back = load_cloud(tmp_path / "c.json")
        np.testing.assert_array_equal(back.points, cloud.points)

    def test_transform_round_trip_is_exact(self, rng):
        t = ps.random_transform(rng)
        back = transform_from_dict(transform_to_dict(t))
        np.testing.assert_array_equal(back.rotation, t.rotation)
        np.testing.assert_array_equal(back.translation, t.translation)
