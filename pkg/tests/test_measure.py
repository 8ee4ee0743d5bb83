import json

import numpy as np
import pytest
from scipy import stats

from mvpp.errors import EmptyMeasure, TenabilityViolation
from mvpp.measure import SignedDelta, WeightedMeasure


def make(pairs, **kw):
    return WeightedMeasure.from_pairs(pairs, **kw)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestAddDelta:
    def test_disjoint_support(self):
        m = make([(0, 1.0)])
        m.add_delta(SignedDelta([(1, 1.0)]))
        assert m.as_dict() == {0: 1.0, 1: 1.0}
        assert m.total_mass == 2.0

    def test_signed_cancellation(self):
        # -d_x + d_0 + d_{x+1} applied at x=0: the d_0 terms cancel
        m = make([(0, 1.0)])
        m.add_delta(SignedDelta([(0, -1.0), (1, 1.0)]))
        assert m.as_dict() == {0: 0.0, 1: 1.0}
        assert m.total_mass == pytest.approx(1.0)

    def test_tenability_violation(self):
        m = make([(0, 0.5)])
        with pytest.raises(TenabilityViolation):
            m.add_delta(SignedDelta([(0, -1.0)]))

    def test_violation_leaves_measure_intact(self):
        m = make([(0, 0.5), (1, 2.0)])
        before = m.as_dict()
        with pytest.raises(TenabilityViolation):
            m.add_delta(SignedDelta([(1, 1.0), (0, -1.0)]))
        assert m.as_dict() == before
        assert m.total_mass == pytest.approx(2.5)

    def test_duplicate_keys_in_one_delta_aggregate(self):
        m = make([(0, 1.0)])
        m.add_delta(SignedDelta([(0, -1.0), (0, 1.0), (1, 1.0)]))
        assert m.as_dict() == {0: 1.0, 1: 1.0}

    def test_signed_measure_allows_negative(self):
        m = WeightedMeasure(nonnegative=False)
        m.add_delta(SignedDelta([(0, -2.0)]))
        assert m.weight_of(0) == -2.0

    def test_negative_label_rejected(self):
        m = WeightedMeasure()
        with pytest.raises(ValueError):
            m.add_delta(SignedDelta([(-3, 1.0)]))

    def test_mass_additivity_over_random_deltas(self):
        r = rng(7)
        m = WeightedMeasure(nonnegative=False)
        total = 0.0
        for _ in range(2000):
            entries = [(int(r.integers(0, 50)), float(r.normal())) for _ in range(3)]
            d = SignedDelta(entries)
            total += d.mass
            m.add_delta(d)
        assert m.total_mass == pytest.approx(total, rel=1e-9, abs=1e-9)


class TestSampling:
    def test_single_atom(self):
        m = make([(5, 2.0)])
        r = rng(1)
        assert all(m.sample_atom(r) == 5 for _ in range(100))

    def test_two_atom_frequency(self):
        # binomial p = 0.75, n = 1e6; 3.5-sigma envelope
        m = make([(0, 1.0), (1, 3.0)])
        r = rng(123)
        hits = sum(m.sample_atom(r) == 1 for _ in range(10**6))
        assert 0.7485 <= hits / 10**6 <= 0.7515

    def test_chi_square_three_atoms(self):
        m = make([(0, 1.0), (1, 1.0), (2, 2.0)])
        r = rng(42)
        draws = np.array([m.sample_atom(r) for _ in range(10**5)])
        counts = np.bincount(draws, minlength=3)
        _, pval = stats.chisquare(counts, 10**5 * np.array([0.25, 0.25, 0.5]))
        assert pval > 1e-3

    def test_chi_square_many_atoms(self):
        r = rng(9)
        weights = r.random(200) + 0.01
        m = make(list(enumerate(weights)))
        draws = np.array([m.sample_atom(r) for _ in range(10**5)])
        counts = np.bincount(draws, minlength=200)
        _, pval = stats.chisquare(counts, 10**5 * weights / weights.sum())
        assert pval > 1e-3

    def test_zero_weight_atom_never_sampled(self):
        m = make([(0, 1.0), (1, 0.0), (2, 1.0)])
        r = rng(3)
        assert all(m.sample_atom(r) != 1 for _ in range(2000))

    def test_empty_raises(self):
        with pytest.raises(EmptyMeasure):
            WeightedMeasure().sample_atom(rng())

    def test_lazy_index_builds_on_first_draw(self):
        m = WeightedMeasure(track_sampler=False)
        m.add_delta(SignedDelta([(0, 1.0), (1, 1.0)]))
        assert m.sample_atom(rng(2)) in (0, 1)


class TestIntegrate:
    def test_constant_gives_mass(self):
        assert make([(0, 1.0), (1, 1.0)]).integrate(lambda x: 1.0) == 2.0

    def test_identity(self):
        assert make([(0, 1.0), (1, 1.0)]).integrate(lambda x: x) == 1.0

    def test_geometric_series(self):
        # oracle: the truncated series itself; its distance to the full sum
        # (= 1) is the tail 2^-22 * 44 ~ 1.0013e-5
        pairs = [(x, 2.0 ** (-x - 1)) for x in range(21)]
        tot = sum(w for _, w in pairs)
        m = make([(x, w / tot) for x, w in pairs])
        expected = sum(x * w for x, w in pairs) / tot
        assert m.integrate(lambda x: float(x)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(1.0, abs=1.1e-5)

    def test_order_invariance_of_aggregation(self):
        deltas = [SignedDelta([(i % 5, 0.1 * (i + 1))]) for i in range(20)]
        m1 = WeightedMeasure()
        for d in deltas:
            m1.add_delta(d)
        m2 = WeightedMeasure()
        for d in reversed(deltas):
            m2.add_delta(d)
        f = lambda x: (x + 1.0) ** 2
        assert m1.integrate(f) == pytest.approx(m2.integrate(f), rel=1e-12)


class TestNormalize:
    def test_single(self):
        assert make([(0, 2.0)]).normalize().as_dict() == {0: 1.0}

    def test_pair(self):
        assert make([(0, 1.0), (1, 3.0)]).normalize().as_dict() == {0: 0.25, 1: 0.75}

    def test_idempotent_exactly(self):
        m = make([(0, 0.3), (1, 0.5), (7, 1.2)])
        once = m.normalize()
        twice = once.normalize()
        assert np.array_equal(once.weights(), twice.weights())

    def test_empty_raises(self):
        with pytest.raises(EmptyMeasure):
            WeightedMeasure().normalize()

    def test_does_not_mutate(self):
        m = make([(0, 2.0)])
        m.normalize()
        assert m.as_dict() == {0: 2.0}


class TestRebuild:
    def test_totals_match_fresh_recomputation(self):
        r = rng(5)
        m = WeightedMeasure(nonnegative=False)
        for _ in range(500):
            m.add_delta(SignedDelta([(int(r.integers(0, 40)), float(r.normal()))]))
        m.rebuild_sampler()
        first = m.total_mass
        m.rebuild_sampler()
        assert m.total_mass == first  # 0 ulp: same summation

    def test_drift_bounded_after_many_updates(self):
        r = rng(11)
        m = WeightedMeasure(nonnegative=False)
        keys = r.integers(0, 100, size=10**6)
        signs = r.choice([-1.0, 1.0], size=10**6)
        for k, s in zip(keys, signs):
            m.add_point_mass(int(k), float(s) + 1.5)
        cached = m.total_mass
        exact = float(m.weights().sum())
        assert abs(cached - exact) / abs(exact) < 1e-9

    def test_empty_measure(self):
        m = WeightedMeasure()
        m.rebuild_sampler()
        assert m.total_mass == 0.0
        with pytest.raises(EmptyMeasure):
            m.sample_atom(rng())

    def test_automatic_rebuild_counter_resets(self):
        m = make([(0, 1.0)])
        m._updates = (1 << 20) - 1
        m.add_delta(SignedDelta([(0, 1.0)]))
        assert m._updates == 0  # rebuild kicked in


class TestEuclidean:
    def test_atoms_never_merge(self):
        m = WeightedMeasure("euclidean", dim=1)
        m.add_delta(SignedDelta([(0.5, 1.0), (0.5, 1.0)]))
        assert m.n_atoms == 2
        assert m.total_mass == 2.0

    def test_nan_rejected(self):
        m = WeightedMeasure("euclidean", dim=1)
        with pytest.raises(ValueError):
            m.add_delta(SignedDelta([(float("nan"), 1.0)]))

    def test_bulk_append(self):
        m = WeightedMeasure("euclidean", dim=1)
        pts = np.linspace(0, 1, 1000)
        m.add_delta(SignedDelta([], bulk_points=pts, bulk_weight=0.001))
        assert m.n_atoms == 1000
        assert m.total_mass == pytest.approx(1.0)
        r = rng(8)
        assert 0.0 <= m.sample_atom(r) <= 1.0

    def test_dim2_points(self):
        m = WeightedMeasure("euclidean", dim=2)
        m.add_delta(SignedDelta([(np.array([1.0, 2.0]), 1.0)]))
        assert m.n_atoms == 1
        assert m.points()[0].tolist() == [1.0, 2.0]


class TestJson:
    def test_round_trip_discrete(self):
        m = make([(0, 0.125), (3, 1.0 / 3.0)])
        obj = json.loads(m.to_json())
        assert obj["space"] == "discrete"
        back = WeightedMeasure.from_json(m.to_json())
        assert back.as_dict() == m.as_dict()

    def test_round_trip_euclidean(self):
        m = WeightedMeasure("euclidean", dim=1)
        m.add_delta(SignedDelta([(0.1, 1.0), (0.2, 2.0)]))
        back = WeightedMeasure.from_json(m.to_json())
        assert np.allclose(back.points(), m.points())
        assert back.total_mass == pytest.approx(m.total_mass)

    def test_schema_fields(self):
        obj = make([(0, 1.0)]).to_json_obj()
        assert set(obj) == {"space", "dim", "atoms", "mass"}
