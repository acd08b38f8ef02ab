import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpplab.geodesic import (
    OutsideRegion,
    Region,
    RegionTooSmall,
    clip_region,
    continuum_lift,
    geodesic,
    optimal_vertex_set,
    passage_time,
    passage_times,
    point_to_line_time,
)
from fpplab.weights import DistributionSpec, WeightField
from oracle_check import check_instance

ONE = WeightField(DistributionSpec.constant(1.0))
KINDS = [
    DistributionSpec.durrett_liggett(0.8, 5.0),
    DistributionSpec.durrett_liggett(0.5, 2.5),
    DistributionSpec.bernoulli_zero(0.5, 1.0),
    DistributionSpec.exponential(1.0),
    DistributionSpec.constant(1.0),
]


def test_constant_axis_times():
    fw = passage_times(ONE, Region(-2, 12, -3, 3), (0, 0))
    for m in range(13):
        assert fw.time((m, 0)) == m
    assert fw.time((0, 0)) == 0.0
    assert fw.time((5, -3)) == 8


def test_geodesic_examples():
    g = geodesic(ONE, Region(-2, 6, -2, 2), (0, 0), (3, 0))
    assert g.vertices == ((0, 0), (1, 0), (2, 0), (3, 0)) and g.total_time == 3
    g0 = geodesic(ONE, Region(-1, 1, -1, 1), (0, 0), (0, 0))
    assert g0.vertices == ((0, 0),) and g0.total_time == 0


def test_canonical_tie_break_prefers_east_entry():
    g = geodesic(ONE, Region(-3, 5, -3, 5), (0, 0), (2, 2))
    assert g.vertices == ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2))


def test_optimal_vertex_set_examples():
    for n in (1, 4, 9):
        m = optimal_vertex_set(ONE, Region(-3, n + 3, -3, 3), (0, 0), (n, 0))
        assert m.members == {(x, 0) for x in range(n + 1)}
    m = optimal_vertex_set(ONE, None, (2, -1), (2, -1))
    assert m.members == {(2, -1)}
    box = optimal_vertex_set(ONE, Region(-2, 5, -2, 5), (0, 0), (2, 3))
    assert box.members == {(x, y) for x in range(3) for y in range(4)}


def test_point_to_line_examples():
    r = Region(-3, 10, -5, 5)
    for n in range(0, 11):
        assert point_to_line_time(ONE, r, (0, 0), n) == n
    with pytest.raises(ValueError):
        point_to_line_time(ONE, r, (3, 0), 1)
    with pytest.raises(RegionTooSmall):
        point_to_line_time(ONE, r, (0, 0), 11)


def test_continuum_lift_examples():
    assert continuum_lift((2.0, 3.0)) == (2, 3)
    assert continuum_lift((0.5, 0.0)) == (0, 0)
    assert continuum_lift((1.49, -2.51)) == (1, -3)
    assert continuum_lift((-0.5, -1.5)) == (-1, -2)


def test_clip_region_examples():
    assert clip_region(100, 3) == Region(-300, 300, -300, 300)
    assert clip_region(1, 1) == Region(-1, 1, -1, 1)
    with pytest.raises(ValueError):
        clip_region(0, 3)
    with pytest.raises(ValueError):
        clip_region(5, 0.5)


def test_constant_weights_never_need_a_retry():
    g = geodesic(ONE, clip_region(7, 1), (0, 0), (7, 7), check_boundary=False)
    assert g.total_time == 14
    assert optimal_vertex_set(ONE, None, (0, 0), (7, 0)).region.width <= 7 + 2 * 3


def test_errors():
    r = Region(0, 3, 0, 3)
    with pytest.raises(OutsideRegion):
        passage_times(ONE, r, (5, 0))
    with pytest.raises(OutsideRegion):
        geodesic(ONE, r, (0, 0), (4, 0))
    with pytest.raises(RegionTooSmall):
        geodesic(ONE, Region(0, 3, 0, 0), (0, 0), (3, 0), check_boundary=True)
    with pytest.raises(ValueError):
        Region(2, 1, 0, 0)


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s.kind.value)
def test_oracle_5x5(spec):
    region = Region(0, 4, 0, 4)
    for seed in range(8):
        f = WeightField(spec, seed, 0)
        assert check_instance(f, region, (0, 0), (4, 4)) == []
        assert check_instance(f, region, (2, 1), (0, 3)) == []


@pytest.mark.parametrize("spec", KINDS[:4], ids=lambda s: s.kind.value)
def test_oracle_4x4_geodesic_time(spec):
    region = Region(-1, 2, -1, 2)
    for seed in range(10):
        assert check_instance(WeightField(spec, seed, 7), region, (-1, -1), (2, 2)) == []


def test_oracle_3x3_two_map_with_zero_weights():
    spec = DistributionSpec.bernoulli_zero(0.7, 1.0)
    for seed in range(30):
        assert check_instance(WeightField(spec, seed), Region(0, 2, 0, 2), (0, 0), (2, 2)) == []


vertex = st.tuples(st.integers(-4, 4), st.integers(-4, 4))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**9), a=vertex, b=vertex, c=vertex, k=st.integers(0, 3))
def test_metric_properties(seed, a, b, c, k):
    field = WeightField(KINDS[k], seed)
    r = Region(-6, 6, -6, 6)
    ta, tb = passage_times(field, r, a), passage_times(field, r, b)
    assert ta.time(a) == 0
    assert math.isclose(ta.time(b), tb.time(a), rel_tol=1e-12, abs_tol=1e-12)
    assert ta.time(c) <= ta.time(b) + tb.time(c) + 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**9), p=st.floats(0.05, 0.9), dp=st.floats(0.01, 0.1))
def test_monotone_coupling_in_p(seed, p, dp):
    r = Region(-5, 8, -5, 8)
    lo = passage_times(WeightField(DistributionSpec.durrett_liggett(p), seed), r, (0, 0)).times
    hi = passage_times(WeightField(DistributionSpec.durrett_liggett(p + dp), seed), r, (0, 0)).times
    assert np.all(hi <= lo)


# subcritical zero mass: at p0 = 1/2 the zero clusters are critical and the
# automatic box legitimately grows without bound
AUTO_KINDS = [KINDS[0], KINDS[1], DistributionSpec.bernoulli_zero(0.3, 1.0), KINDS[3]]


@settings(max_examples=16, deadline=None)
@given(seed=st.integers(0, 10**9), x=st.integers(-12, 12), y=st.integers(-12, 12), k=st.integers(0, 3))
def test_auto_region_matches_large_box(seed, x, y, k):
    field = WeightField(AUTO_KINDS[k], seed)
    big = passage_times(field, Region(-40, 40, -40, 40), (0, 0)).time((x, y))
    assert math.isclose(passage_time(field, (0, 0), (x, y)), big, rel_tol=1e-12, abs_tol=1e-12)
    auto = optimal_vertex_set(field, None, (0, 0), (x, y))
    boxed = optimal_vertex_set(field, Region(-40, 40, -40, 40), (0, 0), (x, y))
    assert auto.members == boxed.members


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**9), x=st.integers(0, 10), y=st.integers(0, 10))
def test_members_satisfy_two_map_identity(seed, x, y):
    field = WeightField(DistributionSpec.exponential(1.0), seed)
    r = Region(-5, 15, -5, 15)
    m = optimal_vertex_set(field, r, (0, 0), (x, y))
    fw, bw = passage_times(field, r, (0, 0)), passage_times(field, r, (x, y))
    total = fw.time((x, y))
    for v in itertools.product(range(r.xmin, r.xmax + 1), range(r.ymin, r.ymax + 1)):
        on = math.isclose(fw.time(v) + bw.time(v), total, rel_tol=1e-9)
        assert on == (v in m.members)
    assert set(m.witness.vertices) <= m.members


def test_determinism_and_csv(tmp_path):
    field = WeightField(DistributionSpec.durrett_liggett(0.8), 11)
    a = geodesic(field, None, (0, 0), (20, 13))
    b = geodesic(WeightField(DistributionSpec.durrett_liggett(0.8), 11), None, (0, 0), (20, 13))
    assert a == b
    a.to_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x,y,time" and len(lines) == len(a) + 1
