"""Replacement kernels, weight kernels, their composition and probes.

A replacement kernel maps a color x to a (possibly random, possibly
signed) finite measure: what gets added to the urn when x is drawn. A
weight kernel biases the draw; the supported forms are the identity
P_x = delta_x and the scalar form P_x = w(x) delta_x. The composed
kernel Q = RP drives the sampling-measure dynamics and is what the
mass-bound and Lyapunov probes inspect.

Kernels are immutable after construction and hold no RNG state; samplers
take the caller's generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import MeanUnavailable
from .measure import SignedDelta

BOUND_TOL = 1e-9  # float slack on mass/Lyapunov bound checks


@dataclass(frozen=True)
class ReplacementKernel:
    """The random map x -> measure added to the urn when x is drawn."""

    sampler: Callable[[object, np.random.Generator], SignedDelta]
    mean: Optional[Callable[[object], SignedDelta]] = None
    is_deterministic: bool = False
    is_signed: bool = False

    @classmethod
    def deterministic(cls, mean_fn, is_signed=False) -> "ReplacementKernel":
        return cls(
            sampler=lambda x, rng: mean_fn(x),
            mean=mean_fn,
            is_deterministic=True,
            is_signed=is_signed,
        )

    def sample(self, x, rng: np.random.Generator) -> SignedDelta:
        return self.sampler(x, rng)

    def mean_delta(self, x) -> SignedDelta:
        if self.mean is None:
            raise MeanUnavailable("replacement kernel has no exact mean")
        return self.mean(x)

    @property
    def has_mean(self) -> bool:
        return self.mean is not None


@dataclass(frozen=True)
class WeightKernel:
    """P_x = delta_x (identity) or P_x = w(x) delta_x with w >= 0."""

    kind: str = "identity"
    w: Optional[Callable[[object], float]] = None

    @classmethod
    def identity(cls) -> "WeightKernel":
        return cls("identity", None)

    @classmethod
    def scalar(cls, w: Callable[[object], float]) -> "WeightKernel":
        return cls("scalar", w)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def weight_at(self, x) -> float:
        return 1.0 if self.is_identity else float(self.w(x))

    def apply(self, d: SignedDelta) -> SignedDelta:
        """Return dP; the identity kernel returns ``d`` unchanged."""
        if self.is_identity:
            return d
        return SignedDelta([(p, wt * float(self.w(p))) for p, wt in d.entries])


@dataclass(frozen=True)
class ComposedKernel:
    """Q = RP with optional exact mean and declared mass bounds (c_1, kappa)."""

    q_sampler: Callable[[object, np.random.Generator], SignedDelta]
    q_mean: Optional[Callable[[object], SignedDelta]]
    c_1: float = 0.0
    kappa: float = 1.0

    @property
    def mass_bounds(self) -> tuple:
        return (self.c_1, self.kappa)

    @property
    def has_mean(self) -> bool:
        return self.q_mean is not None

    def sample(self, x, rng: np.random.Generator) -> SignedDelta:
        return self.q_sampler(x, rng)

    def mean_delta(self, x) -> SignedDelta:
        if self.q_mean is None:
            raise MeanUnavailable("composed kernel has no exact mean")
        return self.q_mean(x)

    def mean_mass(self, x) -> float:
        return self.mean_delta(x).mass

    def mean_integral(self, x, f: Callable) -> float:
        """Q_x . f for the exact mean."""
        return float(sum(wt * f(p) for p, wt in self.mean_delta(x).entries))


@dataclass(frozen=True)
class LyapunovSpec:
    """The (V, theta, K, c_1) data of the drift condition Q.V <= theta V + K."""

    V: Callable[[object], float]
    theta: float
    K: float
    c_1: float
    q: float = 1.5  # conjugate exponent, recorded as model metadata

    def __post_init__(self):
        if not (0.0 < self.theta < self.c_1 + BOUND_TOL):
            raise ValueError("need theta in (0, c_1)")


def compose(r: ReplacementKernel, p: WeightKernel, c_1: float = 0.0, kappa: float = 1.0) -> ComposedKernel:
    """Build Q = RP; the exact mean is carried over when r has one."""

    def q_sampler(x, rng):
        return p.apply(r.sampler(x, rng))

    q_mean = None
    if r.mean is not None:
        mean_fn = r.mean

        def q_mean(x):
            return p.apply(mean_fn(x))

    return ComposedKernel(q_sampler=q_sampler, q_mean=q_mean, c_1=c_1, kappa=kappa)


def rescale(k: ComposedKernel, kappa: float) -> ComposedKernel:
    """Divide every sampled and mean delta by kappa; scale bounds by 1/kappa."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")

    def q_sampler(x, rng):
        return k.q_sampler(x, rng).scaled(1.0 / kappa)

    q_mean = None
    if k.q_mean is not None:
        base_mean = k.q_mean

        def q_mean(x):
            return base_mean(x).scaled(1.0 / kappa)

    return ComposedKernel(
        q_sampler=q_sampler, q_mean=q_mean, c_1=k.c_1 / kappa, kappa=k.kappa / kappa
    )


@dataclass
class MassBoundReport:
    min_mass: float
    max_mass: float
    ok: bool
    worst_point: object = None


@dataclass
class LyapunovReport:
    max_ratio_excess: float
    ok: bool
    worst_point: object = None


def check_mass_bounds(k: ComposedKernel, probe: Iterable) -> MassBoundReport:
    """Spot-check c_1 <= Q_x(E) <= kappa on a finite probe set.

    The bounds are universally quantified in the model assumptions; a
    simulator can only probe, and this report says no more than that.
    """
    lo, hi, worst = np.inf, -np.inf, None
    ok = True
    for x in probe:
        m = k.mean_mass(x)
        if m < lo:
            lo = m
        if m > hi:
            hi = m
        if not (k.c_1 - BOUND_TOL <= m <= k.kappa * (1.0 + BOUND_TOL)):
            ok = False
            worst = x
    return MassBoundReport(min_mass=float(lo), max_mass=float(hi), ok=ok, worst_point=worst)


def check_lyapunov(k: ComposedKernel, spec: LyapunovSpec, probe: Iterable) -> LyapunovReport:
    """Spot-check Q_x.V <= theta V(x) + K + 1e-9 on a finite probe set."""
    worst_excess = -np.inf
    worst = None
    for x in probe:
        qv = k.mean_integral(x, spec.V)
        excess = qv - spec.theta * spec.V(x) - spec.K
        if excess > worst_excess:
            worst_excess = excess
            worst = x
    return LyapunovReport(
        max_ratio_excess=float(worst_excess),
        ok=worst_excess <= BOUND_TOL,
        worst_point=worst,
    )
