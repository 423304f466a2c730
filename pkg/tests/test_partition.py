import math

import numpy as np
import pytest

from cavplan.oracle import UnionFind
from cavplan.partition import (
    FleetSnapshot,
    build_partition,
    safe_distance,
    wrap_heading_gap,
)


def snapshot(xy, heading=None, v_ref=None, r_tele=None):
    m = len(xy)
    return FleetSnapshot.from_lists(
        ids=range(m),
        xy=xy,
        heading=heading if heading is not None else np.zeros(m),
        v_ref=v_ref if v_ref is not None else np.full(m, 10.0),
        r_tele=r_tele if r_tele is not None else np.full(m, 50.0),
    )


class TestSafeDistance:
    def test_parallel_uses_faster_speed(self):
        assert safe_distance(10.0, 10.0, 0.0, 1.5) == 15.0

    def test_crossing_uses_speed_sum(self):
        assert safe_distance(5.0, 20.0, math.pi / 2, 1.5) == 37.5

    def test_zero_speeds_give_zero(self):
        assert safe_distance(0.0, 0.0, 0.0, 1.5) == 0.0
        assert safe_distance(0.0, 0.0, math.pi, 1.5) == 0.0

    def test_branch_boundary(self):
        just_below = safe_distance(4.0, 6.0, math.pi / 4 - 1e-9, 1.0)
        at_boundary = safe_distance(4.0, 6.0, math.pi / 4, 1.0)
        assert just_below == 6.0
        assert at_boundary == 10.0

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            safe_distance(1.0, 1.0, 0.0, 0.0)


def test_wrap_heading_gap():
    assert abs(wrap_heading_gap(0.0, 2 * math.pi) - 0.0) < 1e-12
    assert abs(wrap_heading_gap(0.1, -0.1) - 0.2) < 1e-12
    assert abs(wrap_heading_gap(3.0, -3.0) - (2 * math.pi - 6.0)) < 1e-12


class TestBuildPartition:
    def test_far_vehicles_are_singletons(self):
        subs = build_partition(snapshot([[0, 0], [1000, 0]]), 1.5)
        assert sorted(len(s) for s in subs) == [1, 1]

    def test_chain_is_transitively_grouped(self):
        # consecutive pairs couple, ends do not couple directly
        subs = build_partition(snapshot([[0, 0], [12, 0], [24, 0]]), 1.5)
        assert len(subs) == 1
        assert subs[0].members == (0, 1, 2)

    def test_adjacency_is_strict_inequality(self):
        # parallel headings at exactly the threshold distance stay separate
        subs = build_partition(snapshot([[0, 0], [15, 0]]), 1.5)
        assert len(subs) == 2

    def test_edges_respect_min_radio_range(self):
        subs = build_partition(
            snapshot([[0, 0], [10, 0], [20, 0]], v_ref=np.full(3, 20.0),
                     r_tele=[50.0, 50.0, 5.0]),
            1.5,
        )
        assert len(subs) == 1
        assert subs[0].edges == ((0, 1),)
        assert subs[0].neighbors[2] == ()
        assert not subs[0].radio_connected

    def test_partition_is_disjoint_cover(self):
        rng = np.random.default_rng(0)
        snap = snapshot(rng.uniform(-100, 100, size=(30, 2)),
                        heading=rng.uniform(-3, 3, 30),
                        v_ref=rng.uniform(5, 20, 30))
        subs = build_partition(snap, 1.5)
        seen = [m for s in subs for m in s.members]
        assert sorted(seen) == list(range(30))

    def test_edge_symmetry_in_neighbor_lists(self):
        rng = np.random.default_rng(1)
        snap = snapshot(rng.uniform(-60, 60, size=(20, 2)),
                        heading=rng.uniform(-3, 3, 20),
                        v_ref=rng.uniform(5, 20, 20))
        for sub in build_partition(snap, 1.5):
            for a, b in sub.edges:
                assert b in sub.neighbors[a]
                assert a in sub.neighbors[b]
            for m in sub.members:
                assert sub.degree(m) == len(sub.neighbors[m])

    def test_determinism(self):
        rng = np.random.default_rng(2)
        xy = rng.uniform(-100, 100, size=(40, 2))
        heading = rng.uniform(-3, 3, 40)
        v = rng.uniform(5, 20, 40)
        a = build_partition(snapshot(xy, heading, v), 1.5)
        b = build_partition(snapshot(xy, heading, v), 1.5)
        assert [s.members for s in a] == [s.members for s in b]
        assert [s.edges for s in a] == [s.edges for s in b]

    def test_matches_union_find_and_cross_subgraph_safety(self):
        rng = np.random.default_rng(3)
        horizon = 1.5
        for _ in range(25):
            m = 40
            snap = snapshot(rng.uniform(-340, 340, size=(m, 2)),
                            heading=rng.uniform(-math.pi, math.pi, m),
                            v_ref=rng.uniform(5, 20, m))
            subs = build_partition(snap, horizon)
            uf = UnionFind(m)
            comp_of = {}
            for idx, s in enumerate(subs):
                for mem in s.members:
                    comp_of[mem] = idx
            for i in range(m):
                for j in range(i + 1, m):
                    gap = wrap_heading_gap(snap.heading[i], snap.heading[j])
                    thr = safe_distance(snap.v_ref[i], snap.v_ref[j], gap, horizon)
                    d1 = float(np.abs(snap.xy[i] - snap.xy[j]).sum())
                    if d1 < thr:
                        uf.union(i, j)
                    if comp_of[i] != comp_of[j]:
                        assert d1 >= thr
            assert sorted(tuple(g) for g in uf.groups()) == sorted(
                tuple(s.members) for s in subs
            )
