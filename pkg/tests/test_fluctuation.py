import math

import numpy as np
import pytest

from fpplab.fluctuation import (
    DegenerateFit,
    Direction,
    FluctuationSample,
    VariancePoint,
    estimate_chi,
    estimate_xi,
    median_curve,
    sample_fluctuations,
    transversal_fluctuation,
    variance_scan,
)
from fpplab.geodesic import OptimalVertexSet, Region, optimal_vertex_set
from fpplab.weights import DistributionSpec, WeightField
from oracles import enumerate_paths, exact_variance_3x3, mask_to_cells

DL = DistributionSpec.durrett_liggett(0.8, 5.0)


def _mset(points):
    xy = np.array(sorted(points), dtype=np.int64)
    return OptimalVertexSet(tuple(xy[0]), tuple(xy[-1]), xy, None, Region(-5, 5, -5, 5))


def test_transversal_examples():
    assert transversal_fluctuation(_mset({(0, 0), (1, 0), (2, 0)}), Direction(1, 0)) == 0
    assert transversal_fluctuation(_mset({(0, 0), (1, 1)}), Direction(1, 0)) == 1
    assert math.isclose(transversal_fluctuation(_mset({(0, 0), (3, 0)}), Direction(1, math.pi / 4)), 3 / math.sqrt(2))


def test_transversal_against_oracle_diagonal():
    region = Region(0, 4, 0, 4)
    d = Direction(math.sqrt(2), math.pi / 4)
    for seed in range(10):
        field = WeightField(DL, seed)
        east, north = field.block(0, 0, 5, 5)
        _, union, _ = enumerate_paths(east, north, (0, 0))
        cells = mask_to_cells(union[4, 4], 5)
        want = max(abs(x - y) / math.sqrt(2) for x, y in cells)
        got = transversal_fluctuation(optimal_vertex_set(field, region, (0, 0), (4, 4)), d)
        assert math.isclose(got, want, abs_tol=1e-12)


def test_direction_validation_and_point():
    with pytest.raises(ValueError):
        Direction(0, 0.1)
    with pytest.raises(ValueError):
        Direction(1, 2.0)
    assert Direction(1, math.pi / 4).point(10) == (7, 7)
    assert Direction(2, 0).point(3) == (6, 0)


def test_sample_fluctuations_shape_and_determinism():
    d = Direction(1, math.pi / 4)
    a = sample_fluctuations(DL, d, [64, 128], 5, seed=42)
    b = sample_fluctuations(DL, d, [64, 128], 5, seed=42, threads=4)
    assert len(a) == 10 and a == b
    assert [(s.n, s.replicate_id) for s in a] == [(n, r) for n in (64, 128) for r in range(5)]
    assert all(s.hn >= 0 for s in a)
    c = sample_fluctuations(DL, d, [64, 128], 5, seed=43)
    assert [s.hn for s in c] != [s.hn for s in a]


def test_sample_fluctuations_preconditions():
    with pytest.raises(ValueError):
        sample_fluctuations(DL, Direction(1, 0), [8], 0, 1)
    with pytest.raises(ValueError):
        sample_fluctuations(DL, Direction(1, 0), [16, 8], 2, 1)


def _synthetic(fn, ns=(10, 100, 1000), reps=3):
    return [FluctuationSample(n, fn(n, r), r, 0) for n in ns for r in range(reps)]


def test_estimate_xi_exact_power_laws():
    assert estimate_xi(_synthetic(lambda n, r: float(n))).exponent == pytest.approx(1.0, rel=1e-12)
    assert estimate_xi(_synthetic(lambda n, r: math.sqrt(n))).exponent == pytest.approx(0.5, rel=1e-12)


def test_estimate_xi_noisy():
    ns = [2**k for k in range(4, 12)]
    fit = estimate_xi(_synthetic(lambda n, r: n**0.5 * (1 + 0.1 * (-1) ** (n.bit_length() + r)), ns, 1))
    assert abs(fit.exponent - 0.5) <= 0.05
    assert fit.points_used == len(ns) and fit.n_range == (16, 2048)


def test_estimate_xi_degenerate_and_too_few():
    with pytest.raises(DegenerateFit):
        estimate_xi(_synthetic(lambda n, r: 0.0))
    with pytest.raises(ValueError):
        estimate_xi(_synthetic(lambda n, r: 1.0, ns=(10, 100)))


def test_constant_spec_xi_degenerate():
    samples = sample_fluctuations(DistributionSpec.constant(1.0), Direction(1, 0), [8, 16, 32], 2, 0)
    assert all(s.hn == 0 for s in samples)
    with pytest.raises(DegenerateFit):
        estimate_xi(samples)


def test_median_curve():
    ns, med = median_curve(_synthetic(lambda n, r: n + r))
    assert list(ns) == [10, 100, 1000] and list(med) == [11, 101, 1001]


def test_estimate_chi_examples():
    ns = [16, 32, 64, 128, 256]
    assert estimate_chi([(n, float(n)) for n in ns]).exponent == pytest.approx(0.5, rel=1e-12)
    assert estimate_chi([(n, 3.0) for n in ns]).exponent == pytest.approx(0.0, abs=1e-12)
    assert abs(estimate_chi([(n, n ** (2 / 3)) for n in ns]).exponent - 1 / 3) <= 0.02
    fit = estimate_chi([VariancePoint(n, n * (1 + 0.05 * (-1) ** i), 0.1 * n) for i, n in enumerate(ns)])
    assert abs(fit.exponent - 0.5) < 0.05 and fit.stderr > 0
    with pytest.raises(DegenerateFit):
        estimate_chi([(n, 0.0) for n in ns])


def test_variance_scan_matches_exact_enumeration():
    p, high = 0.9, 5.0
    _, exact = exact_variance_3x3(p, high)
    (pt,) = variance_scan(
        DistributionSpec.durrett_liggett(p, high),
        Direction(math.sqrt(2), math.pi / 4),
        [2],
        4000,
        seed=7,
        region=Region(0, 2, 0, 2),
    )
    assert abs(pt.variance - exact) <= 3 * pt.stderr


def test_variance_scan_preconditions():
    with pytest.raises(ValueError, match="replicates"):
        variance_scan(DL, Direction(1, 0), [8, 16], 10, 0)


def test_variance_scan_constant_is_zero():
    scan = variance_scan(DistributionSpec.constant(1.0), Direction(1, 0.3), [8, 16, 32], 30, 0)
    assert all(v.variance == 0 for v in scan)
    with pytest.raises(DegenerateFit):
        estimate_chi(scan)
