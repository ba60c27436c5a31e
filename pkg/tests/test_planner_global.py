"""Coarse-planner tests: partition, barriers, intersection, extraction."""

import math
from fractions import Fraction

import numpy as np
import pytest

from terra_nav.errors import UsageError
from terra_nav.locomotion import SafetyLimits, wrap_angle
from terra_nav.planner_global import (
    RegionPartition,
    build_partition,
    extract_waypoints,
    lda_g_rrt,
    safety_barriers,
    segments_intersect,
)

from conftest import StubTerrain

LIMITS = SafetyLimits(d_safe=0.4, dtheta_safe=0.3, z_safe=0.15)


def segments_intersect_oracle(p1, p2, q1, q2):
    """Exact rational-arithmetic segment intersection (integer inputs).

    Returns the set of intersection points for proper crossings and
    endpoint touches; empty set when disjoint.  Collinear overlaps return
    a sentinel ("overlap",).
    """
    p1 = tuple(Fraction(int(v)) for v in p1)
    p2 = tuple(Fraction(int(v)) for v in p2)
    q1 = tuple(Fraction(int(v)) for v in q1)
    q2 = tuple(Fraction(int(v)) for v in q2)
    r = (p2[0] - p1[0], p2[1] - p1[1])
    s = (q2[0] - q1[0], q2[1] - q1[1])
    denom = r[0] * s[1] - r[1] * s[0]
    qmp = (q1[0] - p1[0], q1[1] - p1[1])
    if denom == 0:
        if qmp[0] * r[1] - qmp[1] * r[0] != 0:
            return set()            # parallel, disjoint lines
        # collinear: project onto r (or s if r degenerate)
        axis = 0 if r[0] != 0 or s[0] != 0 else 1
        a = sorted([p1[axis], p2[axis]])
        b = sorted([q1[axis], q2[axis]])
        lo, hi = max(a[0], b[0]), min(a[1], b[1])
        if lo > hi:
            return set()
        if lo == hi:
            t = (lo - p1[axis]) / r[axis] if r[axis] != 0 else Fraction(0)
            return {(p1[0] + t * r[0], p1[1] + t * r[1])}
        return {("overlap",)}
    t = (qmp[0] * s[1] - qmp[1] * s[0]) / denom
    u = (qmp[0] * r[1] - qmp[1] * r[0]) / denom
    if 0 <= t <= 1 and 0 <= u <= 1:
        return {(p1[0] + t * r[0], p1[1] + t * r[1])}
    return set()


class TestRegionPartition:
    def test_square_workspace_tiles_into_16_regions(self):
        part = build_partition((0.0, 20.0, 0.0, 20.0), 5.0)
        assert part.shape == (4, 4)
        assert part.n_regions == 16

    def test_region_of_corner_and_interior(self):
        part = build_partition((0.0, 20.0, 0.0, 20.0), 5.0)
        assert part.region_of((0.0, 0.0)) == (0, 0)
        assert part.region_of((1.5, 1.5)) == (0, 0)
        assert part.region_of((7.0, 12.0)) == (1, 2)
        assert part.region_of((19.9, 19.9)) == (3, 3)

    def test_boundary_belongs_to_higher_region(self):
        part = build_partition((0.0, 20.0, 0.0, 20.0), 5.0)
        assert part.region_of((5.0, 2.0)) == (1, 0)
        assert part.region_of((2.0, 10.0)) == (0, 2)
        # the outer boundary clamps into the last region
        assert part.region_of((20.0, 20.0)) == (3, 3)

    def test_non_divisible_bounds_round_up(self):
        part = build_partition((0.0, 11.0, 0.0, 7.0), 5.0)
        assert part.shape == (3, 2)

    def test_invalid_region_size(self):
        with pytest.raises(UsageError):
            build_partition((0.0, 20.0, 0.0, 20.0), 0.0)


class TestSafetyBarriers:
    def test_barrier_endpoints_at_twice_step_length(self):
        # theta0 + dtheta_safe = pi/4 with d_step 1 puts the upper barrier
        # endpoint at (sqrt(2), sqrt(2))
        b = safety_barriers((0.0, 0.0), math.pi / 4 - 0.3, 1.0, 0.3)
        assert b.lsb2[1] == pytest.approx([math.sqrt(2), math.sqrt(2)],
                                          abs=1e-12)
        assert b.lsb2[1] == pytest.approx([1.41421, 1.41421], abs=1e-5)
        assert np.linalg.norm(b.lsb1[1]) == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(b.lsb1[0], [0.0, 0.0])
        assert b.radius == pytest.approx(2.0)

    def test_barriers_symmetric_about_heading(self):
        b = safety_barriers((1.0, -2.0), 0.7, 1.5, 0.3)
        v0 = np.array([1.0, -2.0])
        a1 = math.atan2(*(b.lsb1[1] - v0)[::-1])
        a2 = math.atan2(*(b.lsb2[1] - v0)[::-1])
        assert wrap_angle(a1 - 0.7) == pytest.approx(-0.3, abs=1e-12)
        assert wrap_angle(a2 - 0.7) == pytest.approx(+0.3, abs=1e-12)

    def test_invalid_step_raises(self):
        with pytest.raises(UsageError):
            safety_barriers((0, 0), 0.0, 0.0, 0.3)


class TestSegmentsIntersect:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_rational_oracle_on_random_integer_segments(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(400):
            coords = rng.integers(-5, 6, size=8)
            p1, p2, q1, q2 = coords.reshape(4, 2)
            if np.array_equal(p1, p2) or np.array_equal(q1, q2):
                continue
            truth = segments_intersect_oracle(p1, p2, q1, q2)
            got = segments_intersect(p1, p2, q1, q2)
            assert got == (len(truth) > 0), (p1, p2, q1, q2)

    def test_exclusion_point_suppresses_shared_endpoint(self):
        # both segments leave the same vertex; touching there only
        assert segments_intersect((0, 0), (1, 0), (0, 0), (0, 1))
        assert not segments_intersect((0, 0), (1, 0), (0, 0), (0, 1),
                                      exclude=(0, 0))

    def test_exclusion_does_not_mask_other_crossings(self):
        # crossing away from the excluded point still reported
        assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0),
                                  exclude=(0, 0))

    def test_proper_crossing_and_disjoint(self):
        assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
        assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))

    def test_collinear_overlap(self):
        assert segments_intersect((0, 0), (2, 0), (1, 0), (3, 0))
        assert not segments_intersect((0, 0), (1, 0), (2, 0), (3, 0))


class TestLdaGRrt:
    def test_straight_run_reaches_goal(self, flat_terrain_model):
        rng = np.random.default_rng(0)
        path = lda_g_rrt((1.0, 1.0), 0.78, (12.0, 12.0), flat_terrain_model,
                         1.5, LIMITS, 2000, rng,
                         bounds=(0.0, 15.0, 0.0, 15.0))
        assert path is not None
        assert np.allclose(path[0], [1.0, 1.0])
        assert np.allclose(path[-1], [12.0, 12.0])
        d = np.linalg.norm(np.diff(path, axis=0), axis=1)
        assert np.abs(d[:-1] - 1.5).max() < 1e-9
        assert d[-1] <= 1.5 + 1e-9

    def test_deterministic_given_seed(self, flat_terrain_model):
        args = ((1.0, 1.0), 0.2, (10.0, 6.0), flat_terrain_model, 1.5,
                LIMITS, 2000)
        p1 = lda_g_rrt(*args, np.random.default_rng(3),
                       bounds=(0.0, 12.0, 0.0, 12.0))
        p2 = lda_g_rrt(*args, np.random.default_rng(3),
                       bounds=(0.0, 12.0, 0.0, 12.0))
        assert np.array_equal(p1, p2)

    def test_root_adjacent_vertices_inside_wedge(self, flat_terrain_model):
        theta0 = 2.0
        rng = np.random.default_rng(1)
        path = lda_g_rrt((5.0, 5.0), theta0, (-1.0, 9.0), flat_terrain_model,
                         1.5, LIMITS, 3000, rng, bounds=(-3.0, 12.0, 0.0, 14.0))
        assert path is not None
        # the first edge leaves the root inside the heading wedge
        step = path[1] - path[0]
        ang = math.atan2(step[1], step[0])
        assert abs(wrap_angle(ang - theta0)) <= 0.3 + 1e-9

    def test_no_edge_crosses_a_barrier(self, flat_terrain_model):
        v0, theta0, d_step = np.array([5.0, 5.0]), -2.5, 1.5
        rng = np.random.default_rng(2)
        path = lda_g_rrt(v0, theta0, (11.0, 1.0), flat_terrain_model, d_step,
                         LIMITS, 3000, rng, bounds=(0.0, 14.0, 0.0, 14.0))
        assert path is not None
        from terra_nav.planner_global import safety_barriers as sb
        b = sb(v0, theta0, d_step, 0.3)
        for a, c in zip(path[:-1], path[1:]):
            for seg in (b.lsb1, b.lsb2):
                assert not segments_intersect(a, c, seg[0], seg[1],
                                              exclude=v0)

    def test_avoids_high_ground(self):
        def mean(pts):
            return np.where(np.abs(pts[:, 0] - 6.0) < 1.0, 0.5, 0.0)
        tm = StubTerrain(mean_fn=mean)

        def mean_gap(pts):
            wall = (np.abs(pts[:, 0] - 6.0) < 1.0) & (np.abs(pts[:, 1] - 6.0) > 1.5)
            return np.where(wall, 0.5, 0.0)
        tm = StubTerrain(mean_fn=mean_gap)
        rng = np.random.default_rng(4)
        path = lda_g_rrt((1.0, 6.0), 0.0, (11.0, 6.0), tm, 1.5, LIMITS,
                         4000, rng, bounds=(0.0, 12.0, 0.0, 12.0))
        assert path is not None
        assert (mean_gap(path) <= 0.15).all()

    def test_untraversable_start_raises(self):
        tm = StubTerrain(mean_fn=lambda pts: np.full(len(pts), 0.5))
        with pytest.raises(UsageError):
            lda_g_rrt((0.0, 0.0), 0.0, (5.0, 0.0), tm, 1.5, LIMITS, 10,
                      np.random.default_rng(0))

    def test_budget_exhaustion_returns_none(self):
        def mean(pts):
            return np.where(np.hypot(pts[:, 0], pts[:, 1]) < 0.5, 0.0, 0.5)
        tm = StubTerrain(mean_fn=mean)
        out = lda_g_rrt((0.0, 0.0), 0.0, (8.0, 0.0), tm, 1.5, LIMITS, 60,
                        np.random.default_rng(0), bounds=(-1, 9, -4, 4))
        assert out is None

    def test_degenerate_wedge_blocks_sideways_growth(self, flat_terrain_model):
        # a nearly-zero heading tolerance leaves only the straight-ahead ray
        tight = SafetyLimits(d_safe=0.4, dtheta_safe=1e-6, z_safe=0.15)
        rng = np.random.default_rng(5)
        path = lda_g_rrt((0.0, 0.0), 0.0, (4.5, 0.0), flat_terrain_model,
                         1.5, tight, 3000, rng, bounds=(-1.0, 6.0, -3.0, 3.0))
        if path is not None:
            # whatever is found must hug the x-axis near the start
            near = path[np.linalg.norm(path - [0.0, 0.0], axis=1) <= 3.0]
            assert (np.abs(near[:, 1]) < 1e-5).all()


def extract_waypoints_oracle(path, partition):
    """Brute force: from each anchor emit the farthest same-region vertex."""
    out = []
    i = 0
    while i < len(path):
        region = partition.region_of(path[i])
        j = i
        for k in range(i, len(path)):
            if partition.region_of(path[k]) == region:
                j = k
            else:
                break
        out.append(tuple(path[j]))
        i = j + 1
    return np.array(out)


class TestExtractWaypoints:
    def test_single_vertex(self):
        part = build_partition((0, 20, 0, 20), 5.0)
        out = extract_waypoints(np.array([[1.0, 1.0]]), part)
        assert np.allclose(out, [[1.0, 1.0]])

    def test_final_vertex_always_emitted(self):
        part = build_partition((0, 20, 0, 20), 5.0)
        path = np.array([[1, 1], [2.5, 1], [4, 1], [6, 1], [7.5, 1]], float)
        out = extract_waypoints(path, part)
        assert np.allclose(out[-1], [7.5, 1])

    def test_condenses_within_region(self):
        part = build_partition((0, 20, 0, 20), 5.0)
        path = np.array([[1, 1], [2.5, 1], [4, 1], [6, 1], [7.5, 1]], float)
        out = extract_waypoints(path, part)
        # farthest vertex in region (0,0) is (4,1); then (7.5,1) in (1,0)
        assert np.allclose(out, [[4, 1], [7.5, 1]])

    def test_empty_raises(self):
        part = build_partition((0, 20, 0, 20), 5.0)
        with pytest.raises(UsageError):
            extract_waypoints(np.empty((0, 2)), part)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_oracle_on_random_walks(self, seed):
        part = build_partition((0, 20, 0, 20), 5.0)
        rng = np.random.default_rng(seed)
        for _ in range(25):
            n = int(rng.integers(1, 40))
            steps = rng.uniform(-1.5, 1.5, (n, 2))
            path = np.clip(np.cumsum(np.vstack([[10.0, 10.0], steps]),
                                     axis=0), 0.0, 20.0)
            got = extract_waypoints(path, part)
            ref = extract_waypoints_oracle(path, part)
            assert np.allclose(got, ref), seed
