import numpy as np

from mvpp import fenwick


class NaiveCumulative:
    """Reference implementation: plain arrays, O(n) everything."""

    def __init__(self, n):
        self.w = np.zeros(n)

    def add(self, i, delta):
        self.w[i] += delta

    def prefix(self, i):
        return float(self.w[: i + 1].sum())

    def find(self, r):
        c = np.cumsum(self.w)
        return int(np.searchsorted(c, r, side="right"))


def test_build_matches_prefix_sums():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 7, 64, 100, 255):
        w = rng.random(n)
        tree = np.zeros(n + 1)
        fenwick.build(tree, w, n)
        c = np.cumsum(w)
        for i in range(n):
            assert fenwick.prefix(tree, i) == np.float64(c[i]) or abs(
                fenwick.prefix(tree, i) - c[i]
            ) < 1e-12


def test_random_ops_match_naive():
    rng = np.random.default_rng(1)
    n = 128
    tree = np.zeros(n + 1)
    ref = NaiveCumulative(n)
    fenwick.build(tree, np.zeros(n), n)
    for _ in range(3000):
        op = rng.integers(0, 3)
        if op == 0:
            i = int(rng.integers(0, n))
            d = float(rng.normal()) ** 2  # keep weights nonnegative
            fenwick.add(tree, n, i, d)
            ref.add(i, d)
        elif op == 1:
            i = int(rng.integers(0, n))
            assert abs(fenwick.prefix(tree, i) - ref.prefix(i)) < 1e-9
        else:
            total = ref.prefix(n - 1)
            if total > 0:
                r = float(rng.random()) * total
                assert fenwick.find(tree, n, r) == ref.find(r)


def test_find_skips_zero_weight_slots():
    n = 8
    w = np.array([0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 3.0, 0.0])
    tree = np.zeros(n + 1)
    fenwick.build(tree, w, n)
    total = fenwick.total(tree, n)
    hits = {fenwick.find(tree, n, u * total) for u in np.linspace(0, 0.999999, 400)}
    assert hits == {1, 4, 6}


def test_add_range_equals_individual_adds():
    n = 64
    a = np.zeros(n + 1)
    b = np.zeros(n + 1)
    fenwick.build(a, np.zeros(n), n)
    fenwick.build(b, np.zeros(n), n)
    fenwick.add_range(a, n, 10, 20, 0.5)
    for i in range(10, 30):
        fenwick.add(b, n, i, 0.5)
    assert np.array_equal(a, b)
