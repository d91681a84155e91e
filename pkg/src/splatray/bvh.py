"""Bounding volume hierarchy over primitive AABBs.

Flat-array binary BVH built with binned surface-area-heuristic splits (median
fallback), traversed iteratively front to back. The traversal visitor may
shrink the ray's t_max while the walk is in flight; nodes and primitives whose
slab interval starts beyond the current t_max are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gaussians import Aabb, Ray

LEAF_SIZE_DEFAULT = 4
_SAH_BINS = 16
# Past this depth splits become forced medians, so depth is bounded by
# _MAX_SAH_DEPTH + log2(n / leaf_size) and the traversal stack cannot overflow.
_MAX_SAH_DEPTH = 32
MAX_DEPTH = 64
_INF = math.inf


@dataclass
class Bvh:
    """Flat node arrays. Inner nodes store child ids, leaves a prim_order slice.

    node_count[i] == 0 marks an inner node whose children are node_left[i] and
    node_right[i]; otherwise the node is a leaf owning prim_order[node_left[i]
    : node_left[i] + node_count[i]]. Node 0 is the root. prim_lo/prim_hi are
    the primitive boxes in original index order, kept so traversal can test
    individual primitives inside a leaf.
    """

    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_count: np.ndarray
    prim_order: np.ndarray
    prim_lo: np.ndarray
    prim_hi: np.ndarray
    leaf_size: int

    @property
    def num_nodes(self) -> int:
        return int(self.node_lo.shape[0])

    @property
    def num_prims(self) -> int:
        return int(self.prim_order.shape[0])

    def depth(self) -> int:
        if self.num_nodes == 0:
            return 0
        best = 1
        stack = [(0, 1)]
        while stack:
            nid, d = stack.pop()
            best = max(best, d)
            if self.node_count[nid] == 0:
                stack.append((int(self.node_left[nid]), d + 1))
                stack.append((int(self.node_right[nid]), d + 1))
        return best


def _as_box_arrays(aabbs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(aabbs, tuple) and len(aabbs) == 2:
        lo = np.ascontiguousarray(aabbs[0], dtype=np.float64)
        hi = np.ascontiguousarray(aabbs[1], dtype=np.float64)
    else:
        lo = np.array([b.lo for b in aabbs], dtype=np.float64).reshape(-1, 3)
        hi = np.array([b.hi for b in aabbs], dtype=np.float64).reshape(-1, 3)
    if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[1] != 3:
        raise ValueError("expected matching (n, 3) lo/hi arrays")
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("AABBs must be finite")
    if np.any(lo > hi):
        raise ValueError("AABBs must have lo <= hi")
    return lo, hi


def build(aabbs: Sequence[Aabb] | tuple[np.ndarray, np.ndarray], leaf_size: int = LEAF_SIZE_DEFAULT) -> Bvh:
    """Build a BVH over the given boxes.

    Splits choose the axis of largest centroid extent, then the best of
    _SAH_BINS binned SAH partitions on that axis; when binning cannot separate
    the input (all centroids in one bin) the split falls back to the centroid
    median. Node boxes are unions of their children, so every node box
    contains all the primitive boxes below it.
    """
    if leaf_size < 1:
        raise ValueError(f"leaf_size must be >= 1, got {leaf_size}")
    lo, hi = _as_box_arrays(aabbs)
    n = lo.shape[0]
    if n == 0:
        empty3 = np.zeros((0, 3))
        empty_i = np.zeros(0, dtype=np.int64)
        return Bvh(empty3, empty3, empty_i, empty_i, empty_i, empty_i, empty3, empty3, leaf_size)

    centers = 0.5 * (lo + hi)
    node_lo: list[np.ndarray] = []
    node_hi: list[np.ndarray] = []
    node_left: list[int] = []
    node_right: list[int] = []
    node_count: list[int] = []
    prim_order: list[int] = []

    def new_node() -> int:
        node_lo.append(np.zeros(3))
        node_hi.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_count.append(0)
        return len(node_lo) - 1

    def build_rec(ids: np.ndarray, depth: int) -> int:
        nid = new_node()
        box_lo = lo[ids].min(axis=0)
        box_hi = hi[ids].max(axis=0)
        if ids.shape[0] <= leaf_size:
            node_lo[nid] = box_lo
            node_hi[nid] = box_hi
            node_left[nid] = len(prim_order)
            node_count[nid] = ids.shape[0]
            prim_order.extend(int(i) for i in ids)
            return nid
        left_ids, right_ids = _split(ids, depth)
        lid = build_rec(left_ids, depth + 1)
        rid = build_rec(right_ids, depth + 1)
        node_lo[nid] = np.minimum(node_lo[lid], node_lo[rid])
        node_hi[nid] = np.maximum(node_hi[lid], node_hi[rid])
        node_left[nid] = lid
        node_right[nid] = rid
        node_count[nid] = 0
        return nid

    def _split(ids: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
        c = centers[ids]
        extent = c.max(axis=0) - c.min(axis=0)
        axis = int(np.argmax(extent))
        order = ids[np.argsort(c[:, axis], kind="stable")]
        if depth >= _MAX_SAH_DEPTH or extent[axis] <= 0.0:
            half = order.shape[0] // 2
            return order[:half], order[half:]
        cut = _sah_cut(order, axis)
        return order[:cut], order[cut:]

    def _sah_cut(order: np.ndarray, axis: int) -> int:
        m = order.shape[0]
        c = centers[order, axis]
        c0, c1 = c[0], c[-1]
        # Bin by centroid; c is sorted so bins are contiguous index ranges.
        rel = (c - c0) / (c1 - c0)
        bins = np.minimum((rel * _SAH_BINS).astype(np.int64), _SAH_BINS - 1)
        counts = np.bincount(bins, minlength=_SAH_BINS)
        # Prefix/suffix bounding boxes of the sorted primitive list.
        pre_lo = np.minimum.accumulate(lo[order], axis=0)
        pre_hi = np.maximum.accumulate(hi[order], axis=0)
        suf_lo = np.minimum.accumulate(lo[order[::-1]], axis=0)[::-1]
        suf_hi = np.maximum.accumulate(hi[order[::-1]], axis=0)[::-1]
        best_cost = np.inf
        best_cut = m // 2
        cut = 0
        for b in range(_SAH_BINS - 1):
            cut += int(counts[b])
            if cut == 0 or cut == m:
                continue
            cost = cut * _surface(pre_lo[cut - 1], pre_hi[cut - 1]) + (m - cut) * _surface(
                suf_lo[cut], suf_hi[cut]
            )
            if cost < best_cost:
                best_cost = cost
                best_cut = cut
        return best_cut

    root = build_rec(np.arange(n, dtype=np.int64), 0)
    assert root == 0
    return Bvh(
        node_lo=np.array(node_lo),
        node_hi=np.array(node_hi),
        node_left=np.array(node_left, dtype=np.int64),
        node_right=np.array(node_right, dtype=np.int64),
        node_count=np.array(node_count, dtype=np.int64),
        prim_order=np.array(prim_order, dtype=np.int64),
        prim_lo=lo.copy(),
        prim_hi=hi.copy(),
        leaf_size=leaf_size,
    )


def _surface(blo: np.ndarray, bhi: np.ndarray) -> float:
    dx, dy, dz = bhi - blo
    return 2.0 * (dx * dy + dy * dz + dz * dx)


def slab_entry(lo, hi, ray: Ray) -> float:
    """Entry parameter of the ray into a box, or +inf when it misses.

    The overlap test is against the closed interval [ray.t_min, ray.t_max].
    Zero direction components are handled exactly: the box is hit on such an
    axis only if the origin lies inside the slab.
    """
    t0 = ray.t_min
    t1 = ray.t_max
    for axis in range(3):
        d = ray.direction[axis]
        o = ray.origin[axis]
        if d != 0.0:
            ta = (lo[axis] - o) / d
            tb = (hi[axis] - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return _INF
        elif o < lo[axis] or o > hi[axis]:
            return _INF
    return t0


def traverse(bvh: Bvh, ray: Ray, visitor: Callable[[int], None]) -> None:
    """Walk the BVH front to back, calling visitor(prim_id) for every primitive
    whose own box overlaps the ray's current interval.

    The visitor may shrink ray.t_max; subsequent node and primitive tests use
    the updated bound, so a visitor that records the closest accepted hit turns
    the walk into an early-exiting closest-hit query. Every primitive whose box
    overlaps the final interval is guaranteed to have been visited.
    """
    if bvh.num_nodes == 0:
        return
    entry = slab_entry(bvh.node_lo[0], bvh.node_hi[0], ray)
    if entry == _INF:
        return
    stack: list[tuple[int, float]] = [(0, entry)]
    while stack:
        nid, entry = stack.pop()
        if entry > ray.t_max:
            continue
        count = int(bvh.node_count[nid])
        if count > 0:
            start = int(bvh.node_left[nid])
            for k in range(start, start + count):
                pid = int(bvh.prim_order[k])
                if slab_entry(bvh.prim_lo[pid], bvh.prim_hi[pid], ray) != _INF:
                    visitor(pid)
        else:
            lid = int(bvh.node_left[nid])
            rid = int(bvh.node_right[nid])
            el = slab_entry(bvh.node_lo[lid], bvh.node_hi[lid], ray)
            er = slab_entry(bvh.node_lo[rid], bvh.node_hi[rid], ray)
            # Push the farther child first so the nearer one is handled next.
            if el <= er:
                if er != _INF:
                    stack.append((rid, er))
                if el != _INF:
                    stack.append((lid, el))
            else:
                if el != _INF:
                    stack.append((lid, el))
                if er != _INF:
                    stack.append((rid, er))
