"""BVH construction invariants and traversal completeness."""

import math

import numpy as np
import pytest

from splatray.bvh import build, slab_entry, traverse
from splatray.gaussians import Aabb, Ray

_INF = math.inf


def _random_boxes(rng, n, extent=10.0, size=0.6):
    centers = rng.uniform(-extent, extent, size=(n, 3))
    half = rng.uniform(0.05, size, size=(n, 3))
    return centers - half, centers + half


def _brute_slab_hits(lo, hi, ray):
    """Reference visibility set: per-primitive slab test, no hierarchy.

    Same division-based arithmetic as slab_entry so the comparison is exact,
    but written as flat numpy over all boxes instead of scalar recursion.
    """
    o = ray.origin[None, :]
    d = ray.direction[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (lo - o) / d
        tb = (hi - o) / d
    near = np.minimum(ta, tb)
    far = np.maximum(ta, tb)
    zero = d == 0.0
    inside = (o >= lo) & (o <= hi)
    near = np.where(zero, -np.inf, near)
    far = np.where(zero, np.inf, far)
    t0 = np.maximum(near.max(axis=1), ray.t_min)
    t1 = np.minimum(far.min(axis=1), ray.t_max)
    ok = (t0 <= t1) & np.all(~zero | inside, axis=1)
    return set(np.nonzero(ok)[0])


class TestBuild:
    def test_each_primitive_in_exactly_one_leaf(self, rng):
        lo, hi = _random_boxes(rng, 500)
        b = build((lo, hi))
        assert sorted(b.prim_order) == list(range(500))
        owned = []
        for nid in range(b.num_nodes):
            if b.node_count[nid] > 0:
                start = int(b.node_left[nid])
                owned.extend(b.prim_order[start : start + int(b.node_count[nid])])
        assert sorted(owned) == list(range(500))

    def test_nodes_contain_their_primitives(self, rng):
        lo, hi = _random_boxes(rng, 300)
        b = build((lo, hi))

        def check(nid):
            if b.node_count[nid] > 0:
                start = int(b.node_left[nid])
                ids = b.prim_order[start : start + int(b.node_count[nid])]
                assert np.all(b.node_lo[nid] <= lo[ids] + 1e-12)
                assert np.all(b.node_hi[nid] >= hi[ids] - 1e-12)
            else:
                for child in (int(b.node_left[nid]), int(b.node_right[nid])):
                    assert np.all(b.node_lo[nid] <= b.node_lo[child] + 1e-12)
                    assert np.all(b.node_hi[nid] >= b.node_hi[child] - 1e-12)
                    check(child)

        check(0)

    def test_leaf_size_respected(self, rng):
        lo, hi = _random_boxes(rng, 200)
        b = build((lo, hi), leaf_size=2)
        leaf_counts = b.node_count[b.node_count > 0]
        assert leaf_counts.max() <= 2

    def test_accepts_aabb_list(self, rng):
        lo, hi = _random_boxes(rng, 20)
        boxes = [Aabb(lo[i], hi[i]) for i in range(20)]
        b1 = build(boxes)
        b2 = build((lo, hi))
        np.testing.assert_array_equal(b1.prim_order, b2.prim_order)

    def test_single_primitive(self):
        b = build(([np.zeros(3)], [np.ones(3)]))
        assert b.num_prims == 1
        assert b.num_nodes == 1
        assert b.node_count[0] == 1

    def test_empty_scene(self):
        b = build((np.zeros((0, 3)), np.zeros((0, 3))))
        assert b.num_prims == 0
        visited = []
        traverse(b, Ray(origin=[0, 0, 0], direction=[0, 0, 1]), visited.append)
        assert visited == []

    def test_duplicate_boxes_split_anyway(self):
        """Identical centroids defeat any axis split; the median fallback must
        still terminate and respect the depth cap."""
        lo = np.zeros((100, 3))
        hi = np.ones((100, 3))
        b = build((lo, hi), leaf_size=4)
        assert b.depth() <= 64
        assert sorted(b.prim_order) == list(range(100))

    def test_depth_reasonable_for_uniform_cloud(self, rng):
        lo, hi = _random_boxes(rng, 4096)
        b = build((lo, hi))
        # perfectly balanced would be ~10 levels over 4-wide leaves
        assert b.depth() <= 32


class TestSlabEntry:
    def test_hit_and_entry_value(self):
        t = slab_entry(np.array([-1.0, -1, 4]), np.array([1.0, 1, 6]),
                       Ray(origin=[0, 0, 0], direction=[0, 0, 1]))
        assert t == pytest.approx(4.0)

    def test_miss(self):
        t = slab_entry(np.array([2.0, 2, 4]), np.array([3.0, 3, 6]),
                       Ray(origin=[0, 0, 0], direction=[0, 0, 1]))
        assert t == _INF

    def test_origin_inside_box(self):
        """Entry clamps to t_min when the origin starts inside."""
        t = slab_entry(np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]),
                       Ray(origin=[0, 0, 0], direction=[0, 0, 1]))
        assert t == 0.0

    def test_zero_direction_component(self):
        lo, hi = np.array([-1.0, -1, 4]), np.array([1.0, 1, 6])
        hit = slab_entry(lo, hi, Ray(origin=[0.5, 0, 0], direction=[0, 0, 1]))
        miss = slab_entry(lo, hi, Ray(origin=[1.5, 0, 0], direction=[0, 0, 1]))
        assert hit == pytest.approx(4.0)
        assert miss == _INF

    def test_interval_excludes_box_behind_t_max(self):
        ray = Ray(origin=[0, 0, 0], direction=[0, 0, 1], t_max=3.0)
        t = slab_entry(np.array([-1.0, -1, 4]), np.array([1.0, 1, 6]), ray)
        assert t == _INF

    def test_negative_direction(self):
        t = slab_entry(np.array([-1.0, -1, -6]), np.array([1.0, 1, -4]),
                       Ray(origin=[0, 0, 0], direction=[0, 0, -1]))
        assert t == pytest.approx(4.0)


class TestTraverse:
    @pytest.mark.parametrize("n", [1, 7, 64, 800])
    def test_visits_exactly_the_slab_overlaps(self, rng, n):
        """Traversal (with pruning) reaches precisely the primitives a flat
        per-box slab test reports, for many random rays."""
        lo, hi = _random_boxes(rng, n)
        b = build((lo, hi))
        for _ in range(40):
            o = rng.uniform(-12, 12, 3)
            d = rng.normal(size=3)
            ray = Ray(origin=o, direction=d / np.linalg.norm(d))
            visited = set()
            traverse(b, ray, visited.add)
            assert visited == _brute_slab_hits(lo, hi, ray)

    def test_respects_initial_interval(self, rng):
        lo, hi = _random_boxes(rng, 200)
        b = build((lo, hi))
        o = np.array([-15.0, 0.0, 0.0])
        d = np.array([1.0, 0.0, 0.0])
        short = Ray(origin=o, direction=d, t_max=5.0)
        full = Ray(origin=o, direction=d)
        vs, vf = set(), set()
        traverse(b, short, vs.add)
        traverse(b, full, vf.add)
        assert vs == _brute_slab_hits(lo, hi, short)
        assert vs <= vf

    def test_visitor_may_shrink_t_max(self, rng):
        """A visitor that clips to the nearest box entry still sees every box
        overlapping the final interval (early exit never loses valid hits)."""
        lo, hi = _random_boxes(rng, 400)
        b = build((lo, hi))
        for _ in range(20):
            o = rng.uniform(-12, 12, 3)
            d = rng.normal(size=3)
            ray = Ray(origin=o, direction=d / np.linalg.norm(d))
            visited = set()

            def visit(pid):
                visited.add(pid)
                entry = slab_entry(lo[pid], hi[pid], ray)
                if entry < ray.t_max:
                    ray.t_max = entry

            traverse(b, ray, visit)
            # final interval is shorter; everything still overlapping it was seen
            assert _brute_slab_hits(lo, hi, ray) <= visited

    def test_near_to_far_tendency(self, rng):
        """With disjoint boxes along the ray, the first visited primitive is
        the globally nearest one (the reason clipping pays off)."""
        centers = np.arange(10, dtype=np.float64) * 3.0
        lo = np.stack([centers - 0.5, -np.ones(10), -np.ones(10)], axis=1)
        hi = np.stack([centers + 0.5, np.ones(10), np.ones(10)], axis=1)
        b = build((lo, hi))
        order = []
        traverse(b, Ray(origin=[-5.0, 0, 0], direction=[1.0, 0, 0]), order.append)
        assert order[0] == 0
        assert set(order) == set(range(10))
