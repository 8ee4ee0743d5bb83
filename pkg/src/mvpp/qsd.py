"""Ground-truth limits: analytic references and eigen-oracles.

The numerical oracle is a normalized left-eigenvector power iteration on
sub-stochastic nonnegative matrices. Iterations run on the damped matrix
(G + I)/2, which shares left eigenvectors with G and converges even for
periodic kernels (birth-death chains alternate parity, and the naive
iteration silently stalls on a two-cycle average that is not an
eigenvector). The reported eigenvalue is always (nu G)(E) for the
original G.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .errors import (
    InvalidMatrix,
    InvalidParams,
    MeanUnavailable,
    NoConvergence,
    UnknownReference,
)
from .kernels import ReplacementKernel
from .measure import DISCRETE, SignedDelta, WeightedMeasure

TAIL_EPS = 1e-12  # discrete analytic supports truncated below this tail mass


@dataclass
class ReferenceDistribution:
    """An analytic or eigen-derived limit law with pmf/cdf evaluators."""

    kind: str
    support: Optional[np.ndarray] = None  # discrete labels, None for continuous
    probs: Optional[np.ndarray] = None
    cdf_fn: Optional[Callable[[float], float]] = None
    eigenvalue: Optional[float] = None
    params: dict = field(default_factory=dict)
    _pmf_map: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.support is not None and self.probs is not None:
            self._pmf_map = {
                int(x): float(p) for x, p in zip(self.support, self.probs)
            }

    @property
    def is_discrete(self) -> bool:
        return self.support is not None

    def pmf(self, x) -> float:
        return self._pmf_map.get(int(x), 0.0)

    def cdf(self, x: float) -> float:
        if self.cdf_fn is not None:
            return float(self.cdf_fn(x))
        if not self.is_discrete:
            raise UnknownReference("reference has no cdf")
        return float(self.probs[self.support <= x].sum())

    def as_measure(self) -> WeightedMeasure:
        if not self.is_discrete:
            raise UnknownReference("continuous reference has no atom list")
        return WeightedMeasure.from_pairs(
            [(int(x), float(p)) for x, p in zip(self.support, self.probs)]
        )

    def mean(self) -> float:
        if self.is_discrete:
            return float((self.support * self.probs).sum())
        return float(self.params["mean"])

    def std(self) -> float:
        if self.is_discrete:
            mu = self.mean()
            return float(np.sqrt(((self.support - mu) ** 2 * self.probs).sum()))
        return float(self.params["std"])


def _structure_warnings(G: np.ndarray) -> None:
    n = G.shape[0]
    adj = G > 0.0
    # irreducibility: forward and backward reachability from state 0
    def reach(a):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for i in frontier:
                for j in np.nonzero(a[i])[0]:
                    if not seen[j]:
                        seen[j] = True
                        nxt.append(j)
            frontier = nxt
        return seen

    if not (reach(adj).all() and reach(adj.T).all()):
        warnings.warn(
            "kernel is reducible: the quasi-stationary distribution may not be "
            "unique; returning the limit of the damped iteration from a uniform start",
            stacklevel=3,
        )
        return
    # aperiodicity heuristic: gcd of return times to state 0 (up to 2n steps)
    v = np.zeros(n, dtype=bool)
    v[0] = True
    g = 0
    for k in range(1, 2 * n + 1):
        v = adj.T @ v
        if v[0]:
            g = math.gcd(g, k)
            if g == 1:
                break
    if g > 1:
        warnings.warn(
            f"kernel looks periodic (period divides {g}); the damped iteration "
            "still converges to the Perron eigenvector",
            stacklevel=3,
        )


def power_iteration_qsd(
    G: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10**6,
    check_structure: bool = True,
) -> ReferenceDistribution:
    """Left Perron eigenvector of a sub-stochastic matrix, as a QSD oracle.

    Returns the normalized vector nu with nu G = theta_0 nu and the
    mass-decay eigenvalue theta_0 = (nu G)(E).
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidMatrix("G must be square")
    if G.shape[0] < 1:
        raise InvalidMatrix("G must be at least 1x1")
    if (G < 0).any():
        raise InvalidMatrix("G must be entrywise nonnegative")
    rows = G.sum(axis=1)
    if (rows > 1.0 + 1e-12).any():
        raise InvalidMatrix("row sums must be <= 1 + 1e-12 (sub-stochastic)")
    if check_structure:
        _structure_warnings(G)
    n = G.shape[0]
    damped = 0.5 * (G + np.eye(n))
    nu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = nu @ damped
        mass = nxt.sum()
        if mass <= 0.0:
            raise InvalidMatrix("iteration collapsed: G has a zero Perron value")
        nxt /= mass
        if np.abs(nxt - nu).sum() < tol:
            nu = nxt
            break
        nu = nxt
    else:
        raise NoConvergence(f"power iteration did not reach tol={tol} in {max_iter} iters")
    theta0 = float((nu @ G).sum())
    return ReferenceDistribution(
        kind="eigen",
        support=np.arange(n),
        probs=nu,
        eigenvalue=theta0,
        params={"tol": tol},
    )


def left_fixed_vector(K: np.ndarray, tol: float = 1e-12, max_iter: int = 10**6) -> ReferenceDistribution:
    """Perron left eigenvector of a kernel whose diagonal may be negative.

    Uniformizes K to the nonnegative sub-stochastic (K + c I)/(1 + c)
    before iterating; eigenvectors are unchanged and the returned
    eigenvalue refers to K itself.
    """
    K = np.asarray(K, dtype=np.float64)
    off = K - np.diag(np.diag(K))
    if (off < 0).any():
        raise InvalidMatrix("off-diagonal entries must be nonnegative")
    c = max(0.0, -float(np.diag(K).min()))
    n = K.shape[0]
    A = (K + c * np.eye(n)) / (1.0 + c)
    rows = A.sum(axis=1)
    scale = 1.0
    if (rows > 1.0 + 1e-12).any():
        scale = float(rows.max())
        A = A / scale
    ref = power_iteration_qsd(A, tol=tol, max_iter=max_iter)
    nu = ref.probs
    theta = float((nu @ K).sum())
    return ReferenceDistribution(
        kind="eigen", support=ref.support, probs=nu, eigenvalue=theta, params={"tol": tol}
    )


def truncate_bd_kernel(lambdas, mus, N: int) -> np.ndarray:
    """Restrict the birth-death kernel to {0..N-1}; boundary mass is killed."""
    if N < 2:
        raise InvalidParams("truncation level N must be >= 2")
    lam = lambdas if callable(lambdas) else (lambda x, a=np.asarray(lambdas): float(a[x]))
    mu = mus if callable(mus) else (lambda x, a=np.asarray(mus): float(a[x]))
    G = np.zeros((N, N))
    for x in range(N):
        lx, mx = float(lam(x)), float(mu(x))
        if lx < 0 or mx < 0:
            raise InvalidParams("birth/death rates must be nonnegative")
        if x + 1 < N:
            G[x, x + 1] = lx
        if x - 1 >= 0:
            G[x, x - 1] = mx
    return G


def _poisson_reference(rate: float) -> ReferenceDistribution:
    if rate <= 0:
        raise InvalidParams("poisson rate must be positive")
    xs, ps = [], []
    p = math.exp(-rate)
    x, cum = 0, 0.0
    while cum < 1.0 - TAIL_EPS:
        xs.append(x)
        ps.append(p)
        cum += p
        x += 1
        p *= rate / x
        if x > 10_000:
            break
    return ReferenceDistribution(
        kind="analytic:poisson",
        support=np.array(xs),
        probs=np.array(ps),
        params={"rate": rate},
    )


def _poisson_rate_weighted_reference(lam: float, mu: float) -> ReferenceDistribution:
    """Stationary law of the birth-death jump chain with rates (lam, x mu).

    This is poisson(lam/mu) reweighted by the total jump rate lam + x mu;
    it is the fixed point nu R = nu of the jump-chain kernel and hence the
    limit of the corresponding unweighted balanced urn.
    """
    base = _poisson_reference(lam / mu)
    w = base.probs * (base.support * mu + lam)
    w = w / w.sum()
    return ReferenceDistribution(
        kind="analytic:poisson_rate_weighted",
        support=base.support,
        probs=w,
        params={"lambda": lam, "mu": mu},
    )


def _geometric_half_reference() -> ReferenceDistribution:
    n = int(math.ceil(-math.log2(TAIL_EPS)))
    xs = np.arange(n + 1)
    ps = 0.5 ** (xs + 1.0)
    return ReferenceDistribution(kind="analytic:geometric_half", support=xs, probs=ps)


def _protected_reference() -> ReferenceDistribution:
    """Limit proportions of internal nodes by number of leaf-children."""
    e = math.e
    xs = [0]
    ps = [1.0 - 2.0 / e]
    x = 1
    while True:
        tail = sum(1.0 / math.factorial(j) for j in range(x + 1, x + 60))
        p = 2.0 / e * tail
        if p < TAIL_EPS and x > 3:
            break
        xs.append(x)
        ps.append(p)
        x += 1
    return ReferenceDistribution(
        kind="analytic:protected_pi", support=np.array(xs), probs=np.array(ps)
    )


def _gaussian_reference(mean: float, std: float) -> ReferenceDistribution:
    if std <= 0:
        raise InvalidParams("std must be positive")
    return ReferenceDistribution(
        kind="analytic:gaussian",
        cdf_fn=lambda x: float(ndtr((x - mean) / std)),
        params={"mean": mean, "std": std},
    )


def analytic_reference(key: str, params: Optional[dict] = None) -> ReferenceDistribution:
    """Look up an analytic limit law by key.

    Keys: ``poisson`` (rate), ``poisson_rate_weighted`` (lambda, mu),
    ``geometric_half``, ``protected_pi``, ``gaussian`` (mean, std).
    """
    params = dict(params or {})
    if key == "poisson":
        return _poisson_reference(float(params["rate"]))
    if key == "poisson_rate_weighted":
        return _poisson_rate_weighted_reference(float(params["lambda"]), float(params["mu"]))
    if key == "geometric_half":
        return _geometric_half_reference()
    if key == "protected_pi":
        return _protected_reference()
    if key == "gaussian":
        return _gaussian_reference(float(params["mean"]), float(params["std"]))
    raise UnknownReference(f"unknown reference key {key!r}")


def nu_R(
    nu: ReferenceDistribution,
    r: ReplacementKernel,
    support_cap: int = 10_000,
) -> WeightedMeasure:
    """The measure sum_x nu(x) R_x, for limits of the form nu R / nu R(E)."""
    if not nu.is_discrete:
        raise UnknownReference("nu_R needs a discrete reference")
    if not r.has_mean:
        raise MeanUnavailable("nu_R needs an exact replacement mean")
    out = WeightedMeasure(DISCRETE, nonnegative=False, track_sampler=False)
    for x, p in zip(nu.support, nu.probs):
        if int(x) > support_cap:
            break
        md = r.mean_delta(int(x))
        out.add_delta(SignedDelta([(pt, float(p) * w) for pt, w in md.entries]))
    return out
