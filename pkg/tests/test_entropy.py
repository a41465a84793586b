import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroflow import systems
from entroflow.entropy import (
    SampleCloud,
    count_table_violations,
    dn_distance,
    entropy_estimate,
    exhaustive_max_separated,
    grid_cloud,
    max_separated,
    min_spanning_greedy,
    random_cloud,
)

from conftest import LOG_LAMBDA

CAT = systems.cat_map()

coords = st.floats(min_value=0.0, max_value=1.0, exclude_max=True, allow_nan=False)
torus_points = st.tuples(coords, coords)


def dn_matrix(sys, pts, n):
    m = len(pts)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            out[i, j] = out[j, i] = dn_distance(sys, pts[i], pts[j], n)
    return out


def naive_max_separated(dist, delta):
    m = dist.shape[0]
    best = 0
    for r in range(m, 0, -1):
        for sub in itertools.combinations(range(m), r):
            if all(dist[i, j] > delta for i, j in itertools.combinations(sub, 2)):
                return r
    return best


def test_dn_one_step_is_phase_metric(rng):
    pts = rng.random((10, 2))
    for i in range(0, 10, 2):
        x, y = pts[i], pts[i + 1]
        assert dn_distance(CAT, x, y, 1) == pytest.approx(
            float(systems.torus_distance(x, y)), abs=1e-14
        )


def test_dn_frozen_example():
    # orbits of (0.1, 0.2) and (0.12, 0.2) under the cat map, three steps
    x, y = np.array([0.1, 0.2]), np.array([0.12, 0.2])
    seps = []
    ox, oy = x.copy(), y.copy()
    for _ in range(3):
        seps.append(float(systems.torus_distance(ox, oy)))
        ox, oy = CAT.step(ox), CAT.step(oy)
    assert dn_distance(CAT, x, y, 3) == pytest.approx(max(seps), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=torus_points, y=torus_points, n=st.integers(1, 5))
def test_dn_metric_axioms(x, y, n):
    x, y = np.array(x), np.array(y)
    dxy = dn_distance(CAT, x, y, n)
    assert dxy >= 0.0
    assert dn_distance(CAT, y, x, n) == pytest.approx(dxy, abs=1e-12)
    assert dn_distance(CAT, x, x, n) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(x=torus_points, y=torus_points, z=torus_points, n=st.integers(1, 4))
def test_dn_triangle_inequality(x, y, z, n):
    x, y, z = np.array(x), np.array(y), np.array(z)
    dxz = dn_distance(CAT, x, z, n)
    dxy = dn_distance(CAT, x, y, n)
    dyz = dn_distance(CAT, y, z, n)
    assert dxz <= dxy + dyz + 1e-12


@settings(max_examples=25, deadline=None)
@given(x=torus_points, y=torus_points, n=st.integers(1, 5))
def test_dn_nondecreasing_in_n(x, y, n):
    x, y = np.array(x), np.array(y)
    assert dn_distance(CAT, x, y, n + 1) >= dn_distance(CAT, x, y, n) - 1e-12


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(1, 4),
    delta=st.floats(0.02, 0.2),
)
def test_greedy_separation_and_maximality(seed, n, delta):
    cloud = random_cloud(CAT, 30, seed)
    sep = max_separated(CAT, cloud, n, delta, order_seed=seed)
    chosen = cloud.points[sep.indices]
    for i in range(sep.count):
        for j in range(i + 1, sep.count):
            assert dn_distance(CAT, chosen[i], chosen[j], n) > delta
    # maximality: every cloud point sits within delta of a chosen point
    for p in cloud.points:
        dmin = min(dn_distance(CAT, p, q, n) for q in chosen)
        assert dmin <= delta + 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 3), delta=st.floats(0.02, 0.1))
def test_sandwich_spanning_at_double_radius(seed, n, delta):
    cloud = random_cloud(CAT, 25, seed)
    a_delta = max_separated(CAT, cloud, n, delta).count
    b_two_delta = min_spanning_greedy(CAT, cloud, n, 2.0 * delta)
    assert b_two_delta <= a_delta


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 3), delta=st.floats(0.03, 0.2))
def test_exhaustive_matches_subset_enumeration(seed, n, delta):
    cloud = random_cloud(CAT, 10, seed)
    dist = dn_matrix(CAT, cloud.points, n)
    assert exhaustive_max_separated(dist, delta) == naive_max_separated(dist, delta)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), delta=st.floats(0.03, 0.2))
def test_greedy_within_factor_two_of_exhaustive(seed, delta):
    n = 2
    cloud = random_cloud(CAT, 15, seed)
    dist = dn_matrix(CAT, cloud.points, n)
    true_max = exhaustive_max_separated(dist, delta)
    greedy = max_separated(CAT, cloud, n, delta, order_seed=seed).count
    assert greedy <= true_max
    assert 2 * greedy >= true_max


def test_exhaustive_monotone_in_n_and_delta(rng):
    cloud = random_cloud(CAT, 12, 5)
    for delta in (0.05, 0.1):
        counts = [
            exhaustive_max_separated(dn_matrix(CAT, cloud.points, n), delta)
            for n in range(1, 5)
        ]
        assert counts == sorted(counts)
    for n in (1, 3):
        dist = dn_matrix(CAT, cloud.points, n)
        by_delta = [exhaustive_max_separated(dist, d) for d in (0.05, 0.1, 0.2)]
        assert by_delta == sorted(by_delta, reverse=True)


def test_order_robustness_counts_and_rate():
    cloud = random_cloud(CAT, 200, 11)
    counts = [
        max_separated(CAT, cloud, 4, 0.1, order_seed=s).count for s in range(5)
    ]
    assert max(counts) <= 2 * min(counts)
    rates = [
        entropy_estimate(CAT, cloud, range(1, 7), (0.2, 0.1), order_seed=s).rate
        for s in (0, 1)
    ]
    assert abs(rates[0] - rates[1]) <= 0.05


def test_identity_circle_grid_sandwich():
    ident = systems.ToralMapHandle([[1]])
    cloud = grid_cloud(ident, 100)
    count = max_separated(ident, cloud, 5, 0.05).count
    # spanning floor 10 and the delta/2 ceiling 20 bracket any maximal set
    assert 10 <= count <= 20


def test_identity_estimate_rate_zero():
    ident = systems.ToralMapHandle([[1, 0], [0, 1]])
    est = entropy_estimate(ident, grid_cloud(ident, 16), range(1, 6), (0.2, 0.1))
    assert est.rate == pytest.approx(0.0, abs=1e-12)


def test_estimate_doubling_small_grid():
    sys_ = systems.circle_doubling()
    est = entropy_estimate(sys_, grid_cloud(sys_, 512), range(1, 9), (0.2, 0.1))
    assert est.rate == pytest.approx(math.log(2.0), rel=0.10)
    assert not count_table_violations(est.counts)


def test_estimate_worker_counts_identical():
    cloud = grid_cloud(CAT, 48)
    one = entropy_estimate(CAT, cloud, range(1, 6), (0.2, 0.1), workers=1)
    two = entropy_estimate(CAT, cloud, range(1, 6), (0.2, 0.1), workers=2)
    assert one.counts == two.counts
    assert one.rate == two.rate
    assert one.fit_window == two.fit_window


def test_count_table_violation_messages():
    good = [(1, 0.1, 5, False), (2, 0.1, 9, False)]
    assert count_table_violations(good) == []
    drop_n = [(1, 0.1, 9, False), (2, 0.1, 5, False)]
    msgs = count_table_violations(drop_n)
    assert len(msgs) == 1 and "n=1" in msgs[0] and "delta=0.1" in msgs[0]
    drop_delta = [(3, 0.2, 9, False), (3, 0.1, 5, False)]
    msgs = count_table_violations(drop_delta)
    assert len(msgs) == 1 and "n=3" in msgs[0] and "delta=0.2" in msgs[0]


def test_cloud_rejects_mismatched_dimension():
    with pytest.raises(ValueError, match="dimension"):
        SampleCloud(CAT.space, np.zeros((4, 3)))


def test_cloud_drops_duplicates():
    pts = np.array([[0.1, 0.2], [0.1, 0.2], [0.3, 0.4]])
    assert len(SampleCloud(CAT.space, pts)) == 2


def test_delta_validation():
    cloud = random_cloud(CAT, 10, 0)
    with pytest.raises(ValueError, match="positive"):
        max_separated(CAT, cloud, 1, 0.0)
    with pytest.raises(ValueError, match="cap"):
        max_separated(CAT, cloud, 1, 0.5)
    with pytest.raises(ValueError, match=">= 1"):
        max_separated(CAT, cloud, 0, 0.1)


def test_grid_cloud_sizes():
    assert len(grid_cloud(CAT, 16)) == 256
    assert len(grid_cloud(systems.circle_doubling(), 64)) == 64
