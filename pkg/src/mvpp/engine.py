"""The urn Markov chain: composition measure, sampling measure, draws.

One step: draw a color Y proportionally to the sampling measure mP, draw
a replacement delta at Y, and add it to m (and its P-image to mP). The
empirical color measure eta accumulates delta_Y. A step either fully
applies or raises with the state untouched.

For identity weight kernels the sampling measure *is* the composition
measure, and the engine maintains a single object for both. mP is kept
incrementally; ``paranoid_every`` recomputes it from m periodically and
asserts agreement.

One engine instance is strictly sequential; parallelism happens across
replicas, each owning its own state and RNG stream (Philox, keyed by
(master_seed, replica_id)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyMeasure, InternalCheckFailed, MeanUnavailable
from .kernels import ComposedKernel, ReplacementKernel, WeightKernel
from .measure import EUCLIDEAN, SignedDelta, WeightedMeasure


def make_rng(master_seed: int, replica: int = 0) -> np.random.Generator:
    """Counter-based splittable stream: replica streams never overlap."""
    seq = np.random.SeedSequence((int(master_seed), int(replica)))
    return np.random.Generator(np.random.Philox(seed=seq))


@dataclass
class StepRecord:
    n: int
    drawn_color: object
    delta_mass: float
    m_mass: float
    mP_mass: float


@dataclass
class Observer:
    """Pulls a row of floats from the state every ``stride`` steps."""

    name: str
    stride: int
    fn: Callable[["MvppState", StepRecord], Mapping[str, float]]


class MvppState:
    """Full urn state: m, mP, eta, step counter, RNG, kernel bundle."""

    __slots__ = (
        "m",
        "mP",
        "eta",
        "step_count",
        "rng",
        "replacement",
        "weight",
        "composed",
        "last_color",
        "paranoid_every",
    )

    def __init__(self, m, mP, eta, rng, replacement, weight, composed, paranoid_every=None):
        self.m = m
        self.mP = mP
        self.eta = eta
        self.step_count = 0
        self.rng = rng
        self.replacement = replacement
        self.weight = weight
        self.composed = composed
        self.last_color = None
        self.paranoid_every = paranoid_every

    @property
    def aliased(self) -> bool:
        return self.m is self.mP


def _apply_weight_to_measure(m: WeightedMeasure, weight: WeightKernel) -> WeightedMeasure:
    out = WeightedMeasure(m.space, m.dim, nonnegative=True, track_sampler=True)
    pairs = []
    pts = m.points()
    w = m.weights()
    for i in range(m.n_atoms):
        p = int(pts[i]) if m.space != EUCLIDEAN else (float(pts[i][0]) if m.dim == 1 else pts[i])
        pairs.append((p, float(w[i]) * weight.weight_at(p)))
    if pairs:
        out.add_delta(SignedDelta(pairs))
    return out


def init(
    m0: WeightedMeasure,
    replacement: ReplacementKernel,
    weight: WeightKernel,
    seed: int = 0,
    replica: int = 0,
    composed: Optional[ComposedKernel] = None,
    rng: Optional[np.random.Generator] = None,
    paranoid_every: Optional[int] = None,
) -> MvppState:
    """Build the initial state; the caller's m0 is copied, not adopted."""
    if m0.total_mass <= 0.0:
        raise EmptyMeasure("initial composition must have positive mass")
    m = m0.copy(track_sampler=weight.is_identity)
    if weight.is_identity:
        mP = m
    else:
        mP = _apply_weight_to_measure(m0, weight)
        if mP.total_mass <= 0.0:
            raise EmptyMeasure("initial sampling measure m0 P has zero mass")
    eta = WeightedMeasure(m0.space, m0.dim, nonnegative=True, track_sampler=False)
    if rng is None:
        rng = make_rng(seed, replica)
    return MvppState(m, mP, eta, rng, replacement, weight, composed, paranoid_every)


def step(state: MvppState) -> StepRecord:
    """Advance one draw-and-replace transition; atomic on failure."""
    mP = state.mP
    if mP.total_mass <= 0.0:
        raise EmptyMeasure(f"sampling measure exhausted at step {state.step_count}")
    y = mP.sample_atom(state.rng)
    d = state.replacement.sample(y, state.rng)
    if state.aliased:
        state.m.add_delta(d)  # stage+commit raises before touching state
    else:
        dP = state.weight.apply(d)
        ops_m = state.m._stage(d)
        ops_p = mP._stage(dP)
        state.m._commit(ops_m)
        mP._commit(ops_p)
    state.eta.add_point_mass(y, 1.0)
    state.step_count += 1
    state.last_color = y
    if state.paranoid_every and state.step_count % state.paranoid_every == 0:
        _paranoid_check(state)
    return StepRecord(
        n=state.step_count,
        drawn_color=y,
        delta_mass=d.mass,
        m_mass=state.m.total_mass,
        mP_mass=mP.total_mass,
    )


def _paranoid_check(state: MvppState) -> None:
    fresh = _apply_weight_to_measure(state.m, state.weight)
    got = state.mP.as_dict() if state.mP.space != EUCLIDEAN else None
    want = fresh.as_dict() if fresh.space != EUCLIDEAN else None
    if got is not None:
        for k, v in want.items():
            g = got.get(k, 0.0)
            if abs(g - v) > 1e-9 * max(1.0, abs(v)):
                raise InternalCheckFailed(
                    f"mP drifted from m.P at atom {k}: {g!r} vs {v!r} (step {state.step_count})"
                )
    if abs(state.mP.total_mass - fresh.total_mass) > 1e-9 * max(1.0, fresh.total_mass):
        raise InternalCheckFailed("mP total mass drifted from recomputation")


def run(
    state: MvppState,
    n_steps: int,
    observers: Sequence[Observer] = (),
) -> list:
    """Apply ``step`` n_steps times; return observer rows in step order."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    trace = []
    for i in range(n_steps):
        try:
            rec = step(state)
        except Exception as e:
            e.step_index = state.step_count  # failing step attached for callers
            raise
        row = None
        for obs in observers:
            if rec.n % obs.stride == 0:
                if row is None:
                    row = {"step": rec.n}
                row.update(obs.fn(state, rec))
        if row is not None:
            trace.append(row)
    return trace


def normalized_views(state: MvppState) -> dict:
    """Fresh snapshots {m_over_n, m_tilde, eta_tilde} of the current state."""
    if state.step_count < 1:
        raise EmptyMeasure("normalized views need at least one step")
    if state.m.total_mass <= 0.0:
        raise EmptyMeasure("composition measure has no mass")
    return {
        "m_over_n": state.m.scale(1.0 / state.step_count),
        "m_tilde": state.m.normalize(),
        "eta_tilde": state.eta.normalize(),
    }


def _eta_q_integrals(eta: WeightedMeasure, composed: ComposedKernel, f: Callable) -> tuple:
    """(eta_tilde Q . f, eta_tilde Q (E), eta_tilde . f) for discrete eta."""
    n = eta.total_mass
    pts = eta.points()
    w = eta.weights()
    qf = 0.0
    qmass = 0.0
    ef = 0.0
    cache: dict = {}
    for i in range(eta.n_atoms):
        x = int(pts[i]) if eta.space != EUCLIDEAN else float(pts[i][0])
        c = w[i] / n
        got = cache.get(x)
        if got is None:
            md = composed.mean_delta(x)
            got = (float(sum(wt * f(p) for p, wt in md.entries)), md.mass)
            cache[x] = got
        qf += c * got[0]
        qmass += c * got[1]
        ef += c * f(x)
    return qf, qmass, ef


def sa_diagnostic(before: MvppState, after: MvppState, f: Callable) -> dict:
    """One-step decomposition of the empirical-measure update.

    Writes the increment of eta_tilde . f as gamma * (F . f + U . f) with
    gamma = 1 / ((n+1) * eta_tilde_n Q(E)), F the mean drift and U the
    innovation, and reports the residual of that identity.
    """
    if before.composed is None or not before.composed.has_mean:
        raise MeanUnavailable("sa_diagnostic needs an exact composed mean")
    n = before.step_count
    if n < 1:
        raise EmptyMeasure("sa_diagnostic needs step >= 1 before the transition")
    qf, qmass, ef = _eta_q_integrals(before.eta, before.composed, f)
    gamma = 1.0 / ((n + 1) * qmass)
    f_dot = qf - qmass * ef
    y = after.last_color
    u_dot = qmass * f(y) - qf
    ef_after = after.eta.integrate(f) / after.eta.total_mass
    residual = abs((ef_after - ef) - gamma * (f_dot + u_dot))
    return {"gamma": gamma, "F_dot_f": f_dot, "U_dot_f": u_dot, "residual": residual}


# -- stock observers ---------------------------------------------------------

def mass_observer(name: str = "mass") -> Callable:
    def fn(state: MvppState, rec: StepRecord) -> dict:
        return {
            "m_mass": rec.m_mass,
            "mP_mass": rec.mP_mass,
            "mass_per_step": rec.m_mass / rec.n,
            "mP_per_step": rec.mP_mass / rec.n,
        }

    return fn


def record_observer() -> Callable:
    def fn(state: MvppState, rec: StepRecord) -> dict:
        return {
            "drawn_color": rec.drawn_color,
            "delta_mass": rec.delta_mass,
            "m_mass": rec.m_mass,
            "mP_mass": rec.mP_mass,
        }

    return fn
