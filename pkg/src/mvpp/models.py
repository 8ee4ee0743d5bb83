"""The model zoo: worked urn examples packaged for the engine.

Every model bundles an initial composition, a replacement kernel, a
weight kernel, drift-condition metadata and (where one exists) a
reference limit law. Constructors normalize kernels the way the
underlying analyses do: finite urns divide by the maximal row sum,
random forests by the larger of the two first moments, sample-path urns
by (an estimate of) the supremal mean path mass. Rescaling changes only
the mass normalization, never the normalized limit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .diffusion import (
    KilledDiffusionSpec,
    constant_rate,
    linear_drift,
    sample_killed_path,
    self_interacting_occupation,
)
from .engine import make_rng
from .errors import (
    HorizonCapExceeded,
    InvalidMatrix,
    InvalidParams,
    UnknownModel,
)
from .kernels import (
    ComposedKernel,
    LyapunovSpec,
    ReplacementKernel,
    WeightKernel,
    compose,
)
from .measure import DISCRETE, EUCLIDEAN, SignedDelta, WeightedMeasure
from .qsd import ReferenceDistribution, analytic_reference, power_iteration_qsd, truncate_bd_kernel

PATH_CAP = 10**7


# -- horizons ---------------------------------------------------------------

@dataclass(frozen=True)
class HorizonLaw:
    """Distribution of the truncation time T (on N or [0, inf], plus infinity)."""

    kind: str  # fixed | geometric | exponential | infinite
    value: float = math.inf

    @classmethod
    def fixed(cls, t) -> "HorizonLaw":
        if t < 0:
            raise InvalidParams("fixed horizon must be >= 0")
        if t == 0:
            raise InvalidParams("T = 0 a.s. is not allowed (the horizon law must have mass off 0)")
        return cls("fixed", float(t))

    @classmethod
    def geometric(cls, p: float) -> "HorizonLaw":
        # P(T = k) = (1-p)^k p on {0, 1, ...}; needs P(T = 0) = p < 1
        if not (0.0 < p < 1.0):
            raise InvalidParams("geometric horizon needs p in (0, 1)")
        return cls("geometric", float(p))

    @classmethod
    def exponential(cls, rate: float) -> "HorizonLaw":
        if rate <= 0:
            raise InvalidParams("exponential horizon needs rate > 0")
        return cls("exponential", float(rate))

    @classmethod
    def infinite(cls) -> "HorizonLaw":
        return cls("infinite")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "infinite":
            return math.inf
        if self.kind == "fixed":
            return self.value
        if self.kind == "geometric":
            return float(rng.geometric(self.value) - 1)
        return float(rng.exponential(1.0 / self.value))


# -- model spec --------------------------------------------------------------

@dataclass
class ModelSpec:
    """Everything the engine needs to run one zoo model."""

    name: str
    space: str
    m0: WeightedMeasure
    replacement: ReplacementKernel
    weight: WeightKernel
    dim: int = 1
    lyapunov: Optional[LyapunovSpec] = None
    reference: Optional[ReferenceDistribution] = None
    reference_key: Optional[str] = None
    params: dict = field(default_factory=dict)
    c_1: float = 0.0
    kappa: float = 1.0
    mass_scale: float = 1.0  # the factor the raw kernel was divided by
    predicted_mass_rate: Optional[float] = None
    driver: str = "engine"  # engine | occupation
    extra: dict = field(default_factory=dict)

    def composed(self) -> ComposedKernel:
        return compose(self.replacement, self.weight, c_1=self.c_1, kappa=self.kappa)


# -- finite-color urns -------------------------------------------------------

def finite_polya_urn(
    M: np.ndarray,
    weights: Optional[Sequence[float]] = None,
    m0: Optional[dict] = None,
) -> ModelSpec:
    """Classical d-color urn: drawing color x adds row x of M, scaled by 1/S.

    Colors are labeled 1..d. The scale S is the maximal row sum, so
    kernel masses are at most one; for irreducible M the normalized urn
    converges to the normalized left Perron eigenvector of M.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidMatrix("replacement matrix must be square")
    if (M < 0).any():
        raise InvalidMatrix("negative entries are only supported by the signed-kernel models")
    rows = M.sum(axis=1)
    if (rows <= 0).any():
        raise InvalidMatrix("every row of M must have positive sum")
    d = M.shape[0]
    S = float(rows.max())
    w = np.ones(d) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (d,) or (w <= 0).any():
        raise InvalidMatrix("weights must be positive, one per color")

    @lru_cache(maxsize=None)  # deterministic kernel rows are constants
    def mean(x: int) -> SignedDelta:
        row = M[x - 1]
        return SignedDelta([(i + 1, row[i] / S) for i in range(d) if row[i] != 0.0])

    repl = ReplacementKernel.deterministic(mean)
    if np.all(w == 1.0):
        weight = WeightKernel.identity()
    else:
        weight = WeightKernel.scalar(lambda x: float(w[x - 1]))
    m0m = WeightedMeasure.from_pairs(
        [(int(k), float(v)) for k, v in (m0 or {i + 1: 1.0 for i in range(d)}).items()]
    )
    qmasses = (M * w[None, :]).sum(axis=1) / S
    base = power_iteration_qsd(M / S, check_structure=True)
    ref = ReferenceDistribution(
        kind="eigen", support=base.support + 1, probs=base.probs, eigenvalue=base.eigenvalue
    )
    balanced = bool(np.allclose(rows, S) and np.all(w == 1.0))
    return ModelSpec(
        name="finite_polya",
        space=DISCRETE,
        m0=m0m,
        replacement=repl,
        weight=weight,
        lyapunov=LyapunovSpec(
            V=lambda x: 1.0,
            theta=0.5 * float(qmasses.min()),
            K=max(1.0, float(qmasses.max())),
            c_1=float(qmasses.min()),
        ),
        reference=ref,
        reference_key="eigen",
        params={"S": S, "d": d},
        c_1=float(qmasses.min()),
        kappa=float(max(qmasses.max(), 1.0)),
        mass_scale=S,
        predicted_mass_rate=1.0 if balanced else None,
    )


# -- birth-death urns --------------------------------------------------------

def mm_infty_urn(lam: float, mu: float) -> ModelSpec:
    """Urn whose replacement kernel is the M/M/inf queue's jump chain.

    Balanced (each draw has mass one). The normalized urn converges to
    the fixed point of the jump-chain kernel, which is the rate-weighted
    Poisson law; the plain poisson(lam/mu) reference (the queue's
    stationary law) is attached per the classical presentation of this
    example and is available alongside ``poisson_rate_weighted``.
    """
    if not (0.0 < lam < mu):
        raise InvalidParams("need 0 < lambda < mu")

    @lru_cache(maxsize=None)
    def mean(x: int) -> SignedDelta:
        denom = x * mu + lam
        if x == 0:
            return SignedDelta([(1, 1.0)])
        return SignedDelta([(x + 1, lam / denom), (x - 1, x * mu / denom)])

    repl = ReplacementKernel.deterministic(mean)
    V = math.exp

    def r_dot_v(x: int) -> float:
        return float(sum(wt * V(p) for p, wt in mean(x).entries))

    x_star = int(math.ceil(lam * (math.e**2 - 2.0) / mu))
    K = max(r_dot_v(x) for x in range(x_star + 1))
    lya = LyapunovSpec(V=V, theta=2.0 / math.e, K=K, c_1=1.0, q=2.0)
    return ModelSpec(
        name="mm_infty",
        space=DISCRETE,
        m0=WeightedMeasure.from_pairs([(0, 1.0)]),
        replacement=repl,
        weight=WeightKernel.identity(),
        lyapunov=lya,
        reference=analytic_reference("poisson", {"rate": lam / mu}),
        reference_key="poisson",
        params={"lambda": lam, "mu": mu},
        c_1=1.0,
        kappa=1.0,
        predicted_mass_rate=1.0,
    )


def bd_quasi_ergodic_urn(
    lambdas: Callable[[int], float],
    mus: Callable[[int], float],
    probe_n: int = 500,
    trunc_n: int = 200,
) -> ModelSpec:
    """Unbalanced birth-death urn; the normalized urn approximates the QSD.

    Rates are normalized so the probed supremum of lambda_x + mu_x is
    one. The reference is the left Perron eigenvector of the kernel
    truncated at ``trunc_n``, with the boundary mass killed.
    """
    lam0 = float(lambdas(0))
    if float(mus(0)) != 0.0:
        raise InvalidParams("need mu_0 = 0")
    if lam0 <= 0.0:
        raise InvalidParams("need lambda_0 > 0")
    mu_probe = np.array([float(mus(x)) for x in range(1, probe_n)])
    lam_probe = np.array([float(lambdas(x)) for x in range(probe_n)])
    if (mu_probe <= 0).any():
        raise InvalidParams("need inf_{x>=1} mu_x > 0")
    if not np.isfinite(mu_probe).all() or not np.isfinite(lam_probe).all():
        raise InvalidParams("rates must be finite")
    ratios = lam_probe[1:] / mu_probe
    if ratios[-1] > 0.5 * ratios[0]:
        warnings.warn(
            "lambda_x / mu_x does not appear to vanish on the probe range; "
            "the drift condition is asymptotic and cannot be verified here",
            stacklevel=2,
        )
    totals = lam_probe + np.concatenate([[0.0], mu_probe])
    s = float(totals.max())
    c_1 = float(totals.min()) / s

    @lru_cache(maxsize=None)
    def mean(x: int) -> SignedDelta:
        lx = float(lambdas(x)) / s
        if x == 0:
            return SignedDelta([(1, lx)])
        return SignedDelta([(x + 1, lx), (x - 1, float(mus(x)) / s)])

    repl = ReplacementKernel.deterministic(mean)
    a = math.log(4.0 / c_1)
    theta = c_1 / 2.0

    def V(x: int) -> float:
        return math.exp(a * x)

    # K is the maximal drift excess over the probe {0..100}; deeper probes
    # overflow float64 for this V (see the model notes in the README).
    k_probe = range(0, 101)
    K = max(
        (sum(wt * V(p) for p, wt in mean(x).entries) - theta * V(x)) for x in k_probe
    )
    K = max(K, 1.0)
    G = truncate_bd_kernel(lambda x: float(lambdas(x)) / s, lambda x: float(mus(x)) / s, trunc_n)
    ref = power_iteration_qsd(G)
    return ModelSpec(
        name="bd_quasi_ergodic",
        space=DISCRETE,
        m0=WeightedMeasure.from_pairs([(0, 1.0)]),
        replacement=repl,
        weight=WeightKernel.identity(),
        lyapunov=LyapunovSpec(V=V, theta=theta, K=float(K), c_1=c_1, q=2.0),
        reference=ref,
        reference_key="bd_qsd",
        params={"scale": s, "trunc_n": trunc_n},
        c_1=c_1,
        kappa=1.0,
        mass_scale=s,
        predicted_mass_rate=float(ref.eigenvalue),
    )


# -- random-tree urns --------------------------------------------------------

def rrt_outdegree_urn() -> ModelSpec:
    """Out-degree profile of the random recursive tree as a signed urn."""

    @lru_cache(maxsize=None)
    def mean(x: int) -> SignedDelta:
        return SignedDelta([(x, -1.0), (0, 1.0), (x + 1, 1.0)])

    repl = ReplacementKernel.deterministic(mean, is_signed=True)
    eps = 0.25
    base = 2.0 - eps

    def V(x: int) -> float:
        return base**x

    return ModelSpec(
        name="rrt_outdegree",
        space=DISCRETE,
        m0=WeightedMeasure.from_pairs([(0, 1.0)]),
        replacement=repl,
        weight=WeightKernel.identity(),
        lyapunov=LyapunovSpec(V=V, theta=1.0 - eps, K=1.0, c_1=1.0, q=1.5),
        reference=analytic_reference("geometric_half"),
        reference_key="geometric_half",
        params={"eps": eps},
        c_1=1.0,
        kappa=1.0,
        predicted_mass_rate=1.0,
    )


def rrf_urn(alpha: dict, beta: dict) -> ModelSpec:
    """Out-degree profile of the random recursive forest with multiple children.

    alpha is a law on {-1, 1, 2, ...} with 0 < alpha_{-1} < 1 (edge
    removal vs adding k children at internal nodes); beta a law on
    {1, 2, ...} for leaves. The random kernel is divided by
    M = max(first absolute moment of alpha, mean of beta).
    """
    alpha = {int(k): float(v) for k, v in alpha.items()}
    beta = {int(k): float(v) for k, v in beta.items()}
    if abs(sum(alpha.values()) - 1.0) > 1e-9 or abs(sum(beta.values()) - 1.0) > 1e-9:
        raise InvalidParams("alpha and beta must each sum to one")
    if not (0.0 < alpha.get(-1, 0.0) < 1.0):
        raise InvalidParams("need 0 < alpha_{-1} < 1")
    if any(k < 1 and k != -1 for k in alpha) or any(v < 0 for v in alpha.values()):
        raise InvalidParams("alpha is supported on {-1, 1, 2, ...}")
    if any(k < 1 for k in beta) or any(v < 0 for v in beta.values()):
        raise InvalidParams("beta is supported on {1, 2, ...}")
    m_alpha = sum(abs(k) * v for k, v in alpha.items())
    m_beta = sum(k * v for k, v in beta.items())
    M = max(m_alpha, m_beta)
    a_keys = np.array(sorted(alpha))
    a_cum = np.cumsum([alpha[k] for k in a_keys])
    b_keys = np.array(sorted(beta))
    b_cum = np.cumsum([beta[k] for k in b_keys])

    def sampler(x: int, rng: np.random.Generator) -> SignedDelta:
        u = rng.random()
        if x == 0:
            k = int(b_keys[np.searchsorted(b_cum, u, side="right")])
            return SignedDelta([(0, (k - 1) / M), (k, 1.0 / M)])
        k = int(a_keys[np.searchsorted(a_cum, u, side="right")])
        if k == -1:
            return SignedDelta([(x, -1.0 / M), (x - 1, 1.0 / M)])
        return SignedDelta([(x, -1.0 / M), (0, k / M), (x + k, 1.0 / M)])

    mean_k = sum(k * v for k, v in alpha.items() if k >= 1)
    sum_ak = sum(v for k, v in alpha.items() if k >= 1)

    def mean(x: int) -> SignedDelta:
        if x == 0:
            entries = [(0, sum((k - 1) * v for k, v in beta.items()) / M)]
            entries += [(k, v / M) for k, v in beta.items()]
            return SignedDelta(entries)
        entries = [(x, -1.0 / M), (0, mean_k / M), (x - 1, alpha[-1] / M)]
        entries += [(x + k, v / M) for k, v in alpha.items() if k >= 1]
        return SignedDelta(entries)

    repl = ReplacementKernel(sampler=sampler, mean=mean, is_deterministic=False, is_signed=True)
    c_1 = sum_ak / M
    # largest a with sum alpha_k e^(a k) < 2 sum alpha_k, halved for margin
    lo, hi = 0.0, 1.0
    f = lambda a: sum(v * math.exp(a * k) for k, v in alpha.items() if k >= 1) - 2.0 * sum_ak
    while f(hi) < 0 and hi < 60:
        hi *= 2
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    a = 0.5 * lo if lo > 0 else 0.25

    def V(x: int) -> float:
        return math.exp(a * x)

    theta = c_1 * (
        sum(v * math.exp(a * k) for k, v in alpha.items() if k >= 1) - sum_ak
    ) / sum_ak
    q0v = sum(wt * V(p) for p, wt in mean(0).entries)
    return ModelSpec(
        name="rrf",
        space=DISCRETE,
        m0=WeightedMeasure.from_pairs([(0, 1.0)]),
        replacement=repl,
        weight=WeightKernel.identity(),
        lyapunov=LyapunovSpec(V=V, theta=theta, K=max(1.0, q0v), c_1=c_1, q=1.5),
        reference=None,
        reference_key=None,
        params={"M": M, "M_alpha": m_alpha, "M_beta": m_beta, "a": a},
        c_1=c_1,
        kappa=max(mean_k / M, m_beta / M),
        mass_scale=M,
    )


def protected_nodes_urn(eps: float = 0.5) -> ModelSpec:
    """Internal nodes of the RRT, binned by their number of leaf-children.

    Weighted urn: an internal node with x leaf-children is drawn with
    weight x + 1 (itself plus its leaf-children). The limit profile has
    pi_0 = 1 - 2/e, the protected fraction among internal nodes.
    """

    def sampler(x: int, rng: np.random.Generator) -> SignedDelta:
        if x == 0:
            return SignedDelta([(0, -1.0), (1, 1.0)])
        if rng.random() < 1.0 / (x + 1):
            return SignedDelta([(x, -1.0), (x + 1, 1.0)])
        return SignedDelta([(x, -1.0), (x - 1, 1.0), (1, 1.0)])

    def mean(x: int) -> SignedDelta:
        if x == 0:
            return SignedDelta([(0, -1.0), (1, 1.0)])
        p = 1.0 / (x + 1)
        return SignedDelta([(x, -1.0), (x + 1, p), (x - 1, 1.0 - p), (1, 1.0 - p)])

    repl = ReplacementKernel(sampler=sampler, mean=mean, is_deterministic=False, is_signed=True)
    weight = WeightKernel.scalar(lambda x: float(x + 1))

    vcache = [1.0, 1.0]

    def V(x: int) -> float:
        while len(vcache) <= x:
            vcache.append(vcache[-1] * (len(vcache) - eps))
        return vcache[x]

    theta = 1.0 - eps / 2.0
    comp = compose(repl, weight)
    K = max(
        (comp.mean_integral(x, V) - theta * V(x)) for x in range(0, 101)
    )
    return ModelSpec(
        name="protected_nodes",
        space=DISCRETE,
        m0=WeightedMeasure.from_pairs([(1, 1.0)]),
        replacement=repl,
        weight=weight,
        lyapunov=LyapunovSpec(V=V, theta=theta, K=max(K, 1.0), c_1=1.0, q=1.5),
        reference=analytic_reference("protected_pi"),
        reference_key="protected_pi",
        params={"eps": eps},
        c_1=1.0,
        kappa=1.0,
        predicted_mass_rate=0.5,
    )


# -- sample-path urns --------------------------------------------------------

@dataclass
class AbsorbedChainSpec:
    """An absorbed Markov chain plus the horizon law of the truncation time."""

    matrix: Optional[np.ndarray] = None  # exact sub-stochastic transitions
    sampler: Optional[Callable[[int, np.random.Generator], int]] = None  # -1 = absorbed
    n_states: int = 0
    horizon: HorizonLaw = field(default_factory=HorizonLaw.infinite)
    cap: int = PATH_CAP

    def __post_init__(self):
        if self.matrix is not None:
            G = np.asarray(self.matrix, dtype=np.float64)
            if G.ndim != 2 or G.shape[0] != G.shape[1]:
                raise InvalidMatrix("chain matrix must be square")
            if (G < 0).any():
                raise InvalidMatrix("chain matrix must be nonnegative")
            if (G.sum(axis=1) > 1.0 + 1e-12).any():
                raise InvalidMatrix("chain matrix must be sub-stochastic")
            self.matrix = G
            self.n_states = G.shape[0]
            self._cum = np.cumsum(G, axis=1)
        elif self.sampler is None:
            raise InvalidParams("chain needs a matrix or a sampler")
        if self.horizon.kind == "exponential":
            raise InvalidParams("discrete chains take fixed/geometric/infinite horizons")

    def step_from(self, x: int, rng: np.random.Generator) -> int:
        if self.matrix is not None:
            u = rng.random()
            j = int(np.searchsorted(self._cum[x], u, side="right"))
            return j if j < self.n_states else -1
        return int(self.sampler(x, rng))

    def mean_path_matrix(self) -> np.ndarray:
        """Exact R = sum_n P(T >= n) G^n for supported horizon laws."""
        if self.matrix is None:
            raise InvalidParams("exact mean needs an explicit matrix")
        G = self.matrix
        n = self.n_states
        eye = np.eye(n)
        if self.horizon.kind == "infinite":
            if np.abs(np.linalg.eigvals(G)).max() >= 1.0 - 1e-12:
                raise InvalidParams(
                    "chain is not absorbed from every state (spectral radius >= 1); "
                    "an infinite horizon gives infinite mean paths"
                )
            return np.linalg.solve(eye - G, eye)
        if self.horizon.kind == "geometric":
            return np.linalg.solve(eye - (1.0 - self.horizon.value) * G, eye)
        if self.horizon.kind == "fixed":
            T = int(self.horizon.value)
            out = np.eye(n)
            Gk = np.eye(n)
            for _ in range(T):
                Gk = Gk @ G
                out += Gk
            return out
        raise InvalidParams(f"no exact mean for horizon {self.horizon.kind}")


def discrete_sample_path_urn(
    chain: AbsorbedChainSpec,
    m0_state: int = 0,
    pilot_draws: int = 10**4,
    safety: float = 1.5,
) -> ModelSpec:
    """Urn fed by occupation measures of fresh absorbed-chain paths.

    Each draw simulates the chain from the drawn color until absorption
    or the horizon and adds the visit counts, scaled by 1/s_hat where
    s_hat bounds the supremal mean path mass: exact (max row sum of the
    mean-path matrix) when the chain has a matrix, otherwise a pilot
    estimate times a safety factor. The normalized urn approximates the
    chain's quasi-stationary distribution.
    """
    cap = chain.cap
    horizon = chain.horizon

    if chain.matrix is not None:
        Rmat = chain.mean_path_matrix()
        s_hat = float(Rmat.sum(axis=1).max())
    else:
        Rmat = None
        pilot_rng = make_rng(0xC0FFEE)
        worst = 0.0
        for _ in range(pilot_draws):
            worst = max(worst, _draw_path_mass(chain, m0_state, pilot_rng, cap))
        s_hat = worst * safety

    def sampler(x: int, rng: np.random.Generator) -> SignedDelta:
        visits: dict = {}
        t_lim = horizon.sample(rng)
        cur = int(x)
        n = 0
        while True:
            visits[cur] = visits.get(cur, 0.0) + 1.0
            if n + 1 > cap:
                raise HorizonCapExceeded(f"sample path exceeded {cap} steps")
            if n >= t_lim:
                break
            nxt = chain.step_from(cur, rng)
            if nxt < 0:
                break
            cur = nxt
            n += 1
        return SignedDelta([(k, v / s_hat) for k, v in visits.items()])

    mean = None
    reference = None
    predicted_rate = None
    if Rmat is not None:
        def mean(x: int) -> SignedDelta:
            row = Rmat[x]
            return SignedDelta([(j, row[j] / s_hat) for j in range(len(row)) if row[j] != 0.0])

        reference = power_iteration_qsd(chain.matrix)
        predicted_rate = float((reference.probs @ Rmat).sum() / s_hat)
    masses = Rmat.sum(axis=1) / s_hat if Rmat is not None else None
    return ModelSpec(
        name="sample_path",
        space=DISCRETE,
        m0=WeightedMeasure.from_pairs([(int(m0_state), 1.0)]),
        replacement=ReplacementKernel(sampler=sampler, mean=mean, is_deterministic=False),
        weight=WeightKernel.identity(),
        reference=reference,
        reference_key="chain_qsd" if reference is not None else None,
        params={"s_hat": s_hat},
        c_1=float(masses.min()) if masses is not None else 0.0,
        kappa=float(masses.max()) if masses is not None else 1.0,
        mass_scale=s_hat,
        predicted_mass_rate=predicted_rate,
        extra={"chain": chain},
    )


def _draw_path_mass(chain: AbsorbedChainSpec, x: int, rng: np.random.Generator, cap: int) -> float:
    t_lim = chain.horizon.sample(rng)
    n = 0
    cur = int(x)
    while True:
        if n + 1 > cap:
            raise HorizonCapExceeded(f"sample path exceeded {cap} steps")
        if n >= t_lim:
            break
        nxt = chain.step_from(cur, rng)
        if nxt < 0:
            break
        cur = nxt
        n += 1
    return float(n + 1)


THREE_STATE_MATRIX = np.array(
    [[0.5, 0.3, 0.0], [0.2, 0.4, 0.2], [0.0, 0.3, 0.5]]
)


def killed_diffusion_urn(
    spec: KilledDiffusionSpec,
    horizon_law: Optional[HorizonLaw] = None,
    shell_radius: float = 20.0,
) -> ModelSpec:
    """Urn fed by discretized occupation measures of killed diffusions.

    Draws simulate dX = b dt + dB from the drawn point, kill by thinning
    against kappa_max, truncate at a fresh draw of the horizon law
    (fixed, exponential or infinite), and add one atom of weight dt per
    grid step. The asymptotic drift condition is probed on a shell and
    reported as a warning only.
    """
    cspec = spec.compiled()
    report = cspec.drift_shell_report(shell_radius)
    if not report["ok"]:
        warnings.warn(
            f"drift ratio {report['max_ratio']:.4g} at |x|={shell_radius} does not "
            f"clear the threshold {report['threshold']:.4g}; convergence is not guaranteed",
            stacklevel=2,
        )
    if horizon_law is not None and horizon_law.kind == "geometric":
        raise InvalidParams("diffusions take fixed/exponential/infinite horizons")
    dt = cspec.dt

    def sampler(x, rng: np.random.Generator) -> SignedDelta:
        t_lim = horizon_law.sample(rng) if horizon_law is not None else None
        path = sample_killed_path(cspec, float(x), rng, horizon=t_lim)
        return SignedDelta([], bulk_points=path, bulk_weight=dt)

    m0 = WeightedMeasure(EUCLIDEAN, dim=1)
    m0.add_point_mass(cspec.x0, 1.0)
    return ModelSpec(
        name="killed_diffusion",
        space=EUCLIDEAN,
        m0=m0,
        replacement=ReplacementKernel(sampler=sampler, mean=None),
        weight=WeightKernel.identity(),
        params={"dt": dt, "kappa_max": cspec.kappa_max},
        c_1=0.0,
        kappa=math.inf,
        extra={"diffusion": cspec, "shell_report": report},
    )


def self_interacting_qsd(
    spec: KilledDiffusionSpec,
    t_max: float,
    rng: np.random.Generator,
    reference: Optional[ReferenceDistribution] = None,
    n_checkpoints: int = 50,
    hist_range: tuple = (-6.0, 6.0),
    n_bins: int = 4000,
) -> tuple:
    """Occupation measure of the relocate-instead-of-die diffusion.

    Returns (normalized occupation measure, trace rows). Trace rows hold
    the running Wasserstein-1 distance to ``reference`` (from the running
    histogram; bin-width resolution) and the jump count.
    """
    if spec.kill_rate(spec.x0) < 1.0:
        warnings.warn(
            "self-interacting relocation assumes kill rate >= 1; smaller rates "
            "slow the jump clock and weaken the coupling argument",
            stacklevel=2,
        )
    cspec = spec.compiled()
    res = self_interacting_occupation(
        cspec, t_max, rng, hist_range=hist_range, n_bins=n_bins, n_checkpoints=n_checkpoints
    )
    trace = []
    widths = np.diff(res.edges)
    cdf_ref = None
    if reference is not None:
        cdf_ref = np.array([reference.cdf(e) for e in res.edges[1:]])
    for t, hist in res.checkpoints:
        row = {"step": int(round(t / spec.dt)), "time": t, "n_jumps": res.n_jumps}
        if cdf_ref is not None:
            cdf_emp = np.cumsum(hist) / hist.sum()
            row["distance"] = float(np.sum(np.abs(cdf_emp - cdf_ref) * widths))
        trace.append(row)
    # the occupation measure is built already normalized (equal atom weights)
    occ = WeightedMeasure(EUCLIDEAN, dim=1, track_sampler=False)
    occ.add_delta(
        SignedDelta([], bulk_points=res.positions, bulk_weight=1.0 / len(res.positions))
    )
    return occ, trace


# -- registry ----------------------------------------------------------------

def _require(params: dict, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise InvalidParams(f"missing model parameters: {', '.join(missing)}")


def build_model(name: str, params: Optional[dict] = None) -> ModelSpec:
    """Construct a zoo model by name with a JSON-friendly parameter map."""
    p = dict(params or {})
    if name == "mm_infty":
        _require(p, "lambda", "mu")
        return mm_infty_urn(float(p["lambda"]), float(p["mu"]))
    if name == "finite_polya":
        _require(p, "matrix")
        return finite_polya_urn(
            np.asarray(p["matrix"], dtype=np.float64),
            p.get("weights"),
            {int(k): float(v) for k, v in p["m0"].items()} if "m0" in p else None,
        )
    if name == "bd_quasi_ergodic":
        _require(p, "lam0", "mu")
        lam0, mu = float(p["lam0"]), float(p["mu"])
        if lam0 <= 0 or mu <= 0:
            raise InvalidParams("lam0 and mu must be positive")
        return bd_quasi_ergodic_urn(
            lambda x: lam0 / (x + 1),
            lambda x: 0.0 if x == 0 else mu,
            trunc_n=int(p.get("trunc", 200)),
        )
    if name == "rrt_outdegree":
        return rrt_outdegree_urn()
    if name == "protected_nodes":
        return protected_nodes_urn(eps=float(p.get("eps", 0.5)))
    if name == "rrf":
        _require(p, "alpha", "beta")
        return rrf_urn(
            {int(k): float(v) for k, v in p["alpha"].items()},
            {int(k): float(v) for k, v in p["beta"].items()},
        )
    if name == "sample_path_3state":
        chain = AbsorbedChainSpec(matrix=THREE_STATE_MATRIX, horizon=_horizon_from(p))
        return discrete_sample_path_urn(chain, m0_state=int(p.get("m0_state", 0)))
    if name == "sample_path":
        _require(p, "matrix")
        chain = AbsorbedChainSpec(
            matrix=np.asarray(p["matrix"], dtype=np.float64), horizon=_horizon_from(p)
        )
        return discrete_sample_path_urn(chain, m0_state=int(p.get("m0_state", 0)))
    if name == "killed_diffusion_ou":
        spec = _ou_spec(p)
        law = _horizon_from(p) if "horizon" in p else None
        return killed_diffusion_urn(spec, horizon_law=law)
    if name == "self_interacting_ou":
        spec = _ou_spec(p)
        model = ModelSpec(
            name="self_interacting_ou",
            space=EUCLIDEAN,
            m0=WeightedMeasure(EUCLIDEAN, dim=1),
            replacement=ReplacementKernel(sampler=lambda x, rng: SignedDelta([])),
            weight=WeightKernel.identity(),
            reference=analytic_reference(
                "gaussian", {"mean": 0.0, "std": math.sqrt(1.0 / (2.0 * float(p.get("c", 2.0))))}
            ),
            reference_key="gaussian",
            params=p,
            driver="occupation",
            extra={"diffusion": spec},
        )
        return model
    raise UnknownModel(f"unknown model {name!r}")


def _horizon_from(p: dict) -> HorizonLaw:
    h = p.get("horizon")
    if h is None or h == "infinite":
        return HorizonLaw.infinite()
    if isinstance(h, dict):
        kind = h.get("kind", "infinite")
        if kind == "infinite":
            return HorizonLaw.infinite()
        if kind == "fixed":
            return HorizonLaw.fixed(float(h["value"]))
        if kind == "geometric":
            return HorizonLaw.geometric(float(h["value"]))
        if kind == "exponential":
            return HorizonLaw.exponential(float(h["value"]))
    raise InvalidParams(f"unrecognized horizon spec {h!r}")


def _ou_spec(p: dict) -> KilledDiffusionSpec:
    c = float(p.get("c", 2.0))
    kappa = float(p.get("kappa", 1.0))
    dt = float(p.get("dt", 1e-3))
    return KilledDiffusionSpec(
        drift=linear_drift(c),
        kill_rate=constant_rate(kappa),
        kappa_max=kappa,
        dt=dt,
        horizon=p.get("t_horizon"),
        x0=float(p.get("x0", 0.0)),
    )


MODEL_NAMES = (
    "mm_infty",
    "finite_polya",
    "bd_quasi_ergodic",
    "rrt_outdegree",
    "protected_nodes",
    "rrf",
    "sample_path_3state",
    "sample_path",
    "killed_diffusion_ou",
    "self_interacting_ou",
)
