"""Atomic measures over a discrete or Euclidean color space.

``WeightedMeasure`` is the workhorse container for the urn composition,
the sampling measure, occupation measures and empirical color measures.
Discrete atoms aggregate by integer label; Euclidean atoms are appended
one per insertion and never merged. Weighted sampling runs on a Fenwick
tree over the dense atom array (O(log N) update and draw); the tree is
(re)built on demand for measures that are rarely sampled, and rebuilt
from scratch every 2**20 incremental updates to bound float drift.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import fenwick
from .errors import EmptyMeasure, TenabilityViolation

# Atom weights of nonnegative-flagged measures may dip this far below zero
# so that exact cancellations (-d_x + d_x) never trip the tenability guard.
NEG_SLACK = -1e-12

# Incremental Fenwick updates between automatic full rebuilds.
REBUILD_EVERY = 1 << 20

DISCRETE = "discrete"
EUCLIDEAN = "euclidean"


@dataclass
class SignedDelta:
    """A finite signed combination of Dirac masses, e.g. one kernel draw.

    Entries may repeat a point; consumers aggregate. Points are integer
    labels (discrete space) or floats / length-dim vectors (Euclidean).
    Occupation-measure draws carry their grid atoms as a bulk payload
    (``bulk_points`` with a common ``bulk_weight``) to avoid building
    thousands of pair tuples per draw.
    """

    entries: list
    bulk_points: "np.ndarray | None" = None
    bulk_weight: float = 0.0

    @property
    def mass(self) -> float:
        m = 0.0
        for _, w in self.entries:
            m += w
        if self.bulk_points is not None:
            m += self.bulk_weight * len(self.bulk_points)
        return m

    def scaled(self, factor: float) -> "SignedDelta":
        return SignedDelta(
            [(p, w * factor) for p, w in self.entries],
            bulk_points=self.bulk_points,
            bulk_weight=self.bulk_weight * factor,
        )

    def __iter__(self):
        return iter(self.entries)


def _as_point_array(point, dim: int) -> np.ndarray:
    arr = np.asarray(point, dtype=np.float64).reshape(-1)
    if arr.shape[0] != dim:
        raise ValueError(f"expected a point of dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("euclidean points must be finite")
    return arr


class WeightedMeasure:
    """Growing atomic measure with cached mass and a Fenwick sampler index."""

    __slots__ = (
        "space",
        "dim",
        "nonnegative",
        "_n",
        "_labels",
        "_index",
        "_points",
        "_w",
        "_tree",
        "_mass",
        "_tree_dirty",
        "_updates",
        "_track_sampler",
    )

    def __init__(
        self,
        space: str = DISCRETE,
        dim: int = 1,
        nonnegative: bool = True,
        track_sampler: bool = True,
        capacity: int = 16,
    ):
        if space not in (DISCRETE, EUCLIDEAN):
            raise ValueError(f"unknown space {space!r}")
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.space = space
        self.dim = dim
        self.nonnegative = nonnegative
        self._n = 0
        self._w = np.zeros(capacity)
        self._tree = np.zeros(capacity + 1)
        self._mass = 0.0
        self._tree_dirty = False
        self._updates = 0
        # When False, incremental Fenwick maintenance is skipped and the
        # index is rebuilt lazily on the first draw (cheap for measures
        # that are integrated or snapshotted but never sampled).
        self._track_sampler = track_sampler
        if space == DISCRETE:
            self._labels = np.zeros(capacity, dtype=np.int64)
            self._index: dict | None = {}
            self._points = None
        else:
            self._labels = None
            self._index = None
            self._points = np.zeros((capacity, dim))

    # -- construction ---------------------------------------------------
    @classmethod
    def from_pairs(
        cls,
        pairs: Iterable,
        space: str = DISCRETE,
        dim: int = 1,
        nonnegative: bool = True,
        track_sampler: bool = True,
    ) -> "WeightedMeasure":
        m = cls(space, dim, nonnegative, track_sampler)
        m.add_delta(SignedDelta(list(pairs)))
        return m

    def copy(self, track_sampler: bool | None = None) -> "WeightedMeasure":
        out = WeightedMeasure.__new__(WeightedMeasure)
        out.space = self.space
        out.dim = self.dim
        out.nonnegative = self.nonnegative
        out._n = self._n
        out._w = self._w.copy()
        # a dirty tree carries no information; skip the copy
        out._tree = np.zeros(len(self._w) + 1) if self._tree_dirty else self._tree.copy()
        out._mass = self._mass
        out._tree_dirty = self._tree_dirty
        out._updates = self._updates
        out._track_sampler = self._track_sampler if track_sampler is None else track_sampler
        if self.space == DISCRETE:
            out._labels = self._labels.copy()
            out._index = dict(self._index)
            out._points = None
        else:
            out._labels = None
            out._index = None
            out._points = self._points.copy()
        return out

    # -- basic accessors --------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return self._n

    @property
    def total_mass(self) -> float:
        return self._mass

    def weights(self) -> np.ndarray:
        """Read-only view of the atom weights in insertion order."""
        return self._w[: self._n]

    def points(self):
        """Atom locations in insertion order (labels or coordinate rows)."""
        if self.space == DISCRETE:
            return self._labels[: self._n]
        return self._points[: self._n]

    def weight_of(self, label: int) -> float:
        """Weight of a discrete atom (0.0 if absent)."""
        slot = self._index.get(int(label))
        return float(self._w[slot]) if slot is not None else 0.0

    def as_dict(self) -> dict:
        if self.space != DISCRETE:
            raise ValueError("as_dict is for discrete measures")
        return {int(self._labels[i]): float(self._w[i]) for i in range(self._n)}

    def point_at(self, slot: int):
        if self.space == DISCRETE:
            return int(self._labels[slot])
        p = self._points[slot]
        return float(p[0]) if self.dim == 1 else p.copy()

    # -- growth and staging ------------------------------------------------
    def _grow(self, need: int) -> None:
        cap = len(self._w)
        if self._n + need <= cap:
            return
        while cap < self._n + need:
            cap *= 2
        self._w = np.resize(self._w, cap)
        self._w[self._n :] = 0.0
        self._tree = np.zeros(cap + 1)
        self._tree_dirty = True
        if self.space == DISCRETE:
            self._labels = np.resize(self._labels, cap)
        else:
            pts = np.zeros((cap, self.dim))
            pts[: self._n] = self._points[: self._n]
            self._points = pts

    def _stage(self, delta: SignedDelta):
        """Aggregate a delta into per-slot updates; raise on tenability.

        Returns an opaque staging record for :meth:`_commit`; the measure
        itself is untouched, so a raise here never corrupts state.
        """
        if self.space == DISCRETE:
            agg: dict = {}
            for point, w in delta.entries:
                key = int(point)
                agg[key] = agg.get(key, 0.0) + float(w)
            ops = []  # (slot or -1, key, new_weight, change)
            for key, dw in agg.items():
                slot = self._index.get(key)
                if slot is None:
                    if key < 0:
                        raise ValueError("discrete labels must be >= 0")
                    new_w = dw
                else:
                    new_w = self._w[slot] + dw
                if self.nonnegative and new_w < NEG_SLACK:
                    raise TenabilityViolation(
                        f"atom {key} would reach weight {new_w:.3e} < {NEG_SLACK:g}"
                    )
                ops.append((-1 if slot is None else slot, key, new_w, dw))
            return ops
        # Euclidean: every entry appends a fresh atom.
        ops = []
        for point, w in delta.entries:
            w = float(w)
            if self.nonnegative and w < NEG_SLACK:
                raise TenabilityViolation(f"appended atom weight {w:.3e} < {NEG_SLACK:g}")
            ops.append((_as_point_array(point, self.dim), w))
        if delta.bulk_points is not None and len(delta.bulk_points):
            pts = np.asarray(delta.bulk_points, dtype=np.float64)
            if pts.ndim == 1:
                pts = pts[:, None]
            if pts.shape[1] != self.dim:
                raise ValueError(f"bulk points must have dimension {self.dim}")
            if not np.all(np.isfinite(pts)):
                raise ValueError("euclidean points must be finite")
            w = float(delta.bulk_weight)
            if self.nonnegative and w < NEG_SLACK:
                raise TenabilityViolation(f"bulk atom weight {w:.3e} < {NEG_SLACK:g}")
            ops.append(("__bulk__", pts, w))
        return ops

    def _commit(self, ops) -> None:
        track = self._track_sampler and not self._tree_dirty
        n_cap = len(self._w)
        if self.space == DISCRETE:
            n_new = sum(1 for slot, _, _, _ in ops if slot < 0)
            if n_new:
                self._grow(n_new)
                track = self._track_sampler and not self._tree_dirty
                n_cap = len(self._w)
            for slot, key, new_w, dw in ops:
                if slot < 0:
                    slot = self._n
                    self._n += 1
                    self._labels[slot] = key
                    self._index[key] = slot
                self._w[slot] = new_w
                if track:
                    fenwick.add(self._tree, n_cap, slot, dw)
                self._mass += dw
                self._updates += 1
        else:
            need = sum(len(op[1]) if len(op) == 3 else 1 for op in ops)
            self._grow(need)
            track = self._track_sampler and not self._tree_dirty
            n_cap = len(self._w)
            for op in ops:
                if len(op) == 3:  # ("__bulk__", points, weight)
                    _, pts, w = op
                    k = len(pts)
                    start = self._n
                    self._points[start : start + k] = pts
                    self._w[start : start + k] = w
                    self._n += k
                    if track:
                        fenwick.add_range(self._tree, n_cap, start, k, w)
                    self._mass += w * k
                    self._updates += k
                else:
                    pt, w = op
                    slot = self._n
                    self._n += 1
                    self._points[slot] = pt
                    self._w[slot] = w
                    if track:
                        fenwick.add(self._tree, n_cap, slot, w)
                    self._mass += w
                    self._updates += 1
        if not self._track_sampler:
            self._tree_dirty = True
        elif self._updates >= REBUILD_EVERY:
            self.rebuild_sampler()

    # -- core operations -------------------------------------------------
    def add_delta(self, delta: SignedDelta) -> "WeightedMeasure":
        """Merge a signed delta into the measure (in place)."""
        self._commit(self._stage(delta))
        return self

    def check_delta(self, delta: SignedDelta) -> None:
        """Raise TenabilityViolation if applying ``delta`` would violate."""
        self._stage(delta)

    def add_point_mass(self, point, w: float = 1.0) -> None:
        """Fast path for the +delta_{point} updates of empirical measures."""
        if self.space == DISCRETE:
            key = int(point)
            slot = self._index.get(key)
            if slot is None:
                self._grow(1)
                slot = self._n
                self._n += 1
                self._labels[slot] = key
                self._index[key] = slot
            self._w[slot] += w
        else:
            self._grow(1)
            slot = self._n
            self._n += 1
            self._points[slot] = _as_point_array(point, self.dim)
            self._w[slot] += w
        if self._track_sampler and not self._tree_dirty:
            fenwick.add(self._tree, len(self._w), slot, w)
        else:
            self._tree_dirty = True
        self._mass += w
        self._updates += 1
        if self._track_sampler and self._updates >= REBUILD_EVERY:
            self.rebuild_sampler()

    def sample_atom(self, rng: np.random.Generator):
        """Draw an atom location with probability weight/total_mass."""
        if self._mass <= 0.0 or self._n == 0:
            raise EmptyMeasure("cannot sample from a measure with mass <= 0")
        if self._tree_dirty:
            self.rebuild_sampler()
        r = rng.random() * self._mass
        slot = fenwick.find(self._tree, len(self._w), r)
        if slot >= self._n:  # float edge between cached mass and tree total
            slot = self._n - 1
        return self.point_at(slot)

    def integrate(self, f: Callable) -> float:
        """Return sum_j weight_j * f(point_j)."""
        if self.space == DISCRETE:
            labels = self._labels[: self._n]
            w = self._w[: self._n]
            return float(sum(w[i] * f(int(labels[i])) for i in range(self._n)))
        pts = self._points[: self._n]
        w = self._w[: self._n]
        if self.dim == 1:
            return float(sum(w[i] * f(float(pts[i, 0])) for i in range(self._n)))
        return float(sum(w[i] * f(pts[i]) for i in range(self._n)))

    def normalize(self) -> "WeightedMeasure":
        """Return a fresh copy scaled to total mass one."""
        if self._mass <= 0.0:
            raise EmptyMeasure("cannot normalize a measure with mass <= 0")
        out = self.copy()
        out._w[: out._n] /= self._mass
        out._mass = 1.0
        out._tree_dirty = True
        return out

    def scale(self, factor: float) -> "WeightedMeasure":
        out = self.copy()
        out._w[: out._n] *= factor
        out._mass *= factor
        out._tree_dirty = True
        return out

    def rebuild_sampler(self) -> "WeightedMeasure":
        """Recompute the Fenwick index and the cached mass from the atoms."""
        n_cap = len(self._w)
        fenwick.build(self._tree, self._w, n_cap)
        # Cached mass is pinned to the tree total so that sampler and mass
        # agree exactly until the next incremental update.
        self._mass = fenwick.total(self._tree, n_cap) if self._n else 0.0
        self._tree_dirty = False
        self._updates = 0
        return self

    # -- serialization ---------------------------------------------------
    def to_json_obj(self) -> dict:
        if self.space == DISCRETE:
            atoms = [[int(self._labels[i]), self._w[i]] for i in range(self._n)]
        else:
            atoms = [
                [self._points[i].tolist() if self.dim > 1 else float(self._points[i, 0]),
                 self._w[i]]
                for i in range(self._n)
            ]
        return {"space": self.space, "dim": self.dim, "atoms": atoms, "mass": self._mass}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict, nonnegative: bool = True) -> "WeightedMeasure":
        m = cls(obj["space"], int(obj.get("dim", 1)), nonnegative=nonnegative)
        m.add_delta(SignedDelta([(p, w) for p, w in obj["atoms"]]))
        return m

    @classmethod
    def from_json(cls, text: str, nonnegative: bool = True) -> "WeightedMeasure":
        return cls.from_json_obj(json.loads(text), nonnegative=nonnegative)

    def __repr__(self) -> str:
        return (
            f"WeightedMeasure({self.space}, atoms={self._n}, mass={self._mass:.6g})"
        )


def add_delta(m: WeightedMeasure, d: SignedDelta) -> WeightedMeasure:
    return m.add_delta(d)


def sample_atom(m: WeightedMeasure, rng: np.random.Generator):
    return m.sample_atom(rng)


def integrate(m: WeightedMeasure, f: Callable) -> float:
    return m.integrate(f)


def normalize(m: WeightedMeasure) -> WeightedMeasure:
    return m.normalize()


def rebuild_sampler(m: WeightedMeasure) -> WeightedMeasure:
    return m.rebuild_sampler()
