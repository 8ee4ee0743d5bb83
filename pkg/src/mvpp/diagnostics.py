"""Distances, convergence traces, assumption probes and seed sweeps.

Weak convergence is certified by total variation on discrete supports
and Wasserstein-1 on the line: TV is exact on countable unions of
supports, W1 metrizes weak convergence plus first moments. Tolerances
used by the acceptance layer are 3-sigma envelopes from pilot runs; the
underlying limits are almost-sure with no rates.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .engine import MvppState
from .errors import (
    DimensionUnsupported,
    EmptyTrace,
    MeanUnavailable,
    NotNormalized,
)
from .kernels import LyapunovSpec
from .measure import DISCRETE, EUCLIDEAN, WeightedMeasure
from .qsd import ReferenceDistribution

W1_GRID_POINTS = 10_000
W1_GRID_STDS = 8.0


@dataclass
class ConvergenceTrace:
    """Rows of (step, distance, mass_per_step, extras) with increasing steps."""

    steps: np.ndarray
    distances: np.ndarray
    mass_per_step: np.ndarray
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: Sequence[dict], distance_key: str = "distance") -> "ConvergenceTrace":
        steps = np.array([r["step"] for r in rows], dtype=np.int64)
        if len(steps) and (np.diff(steps) <= 0).any():
            raise ValueError("trace steps must be strictly increasing")
        dist = np.array([r.get(distance_key, np.nan) for r in rows])
        mps = np.array([r.get("mass_per_step", np.nan) for r in rows])
        return cls(steps=steps, distances=dist, mass_per_step=mps)

    def __len__(self) -> int:
        return len(self.steps)


def _check_normalized(mass: float, what: str) -> None:
    if abs(mass - 1.0) > 1e-6:
        raise NotNormalized(f"{what} has mass {mass!r}, expected 1 within 1e-6")


def _discrete_pmf(m: Union[WeightedMeasure, ReferenceDistribution]) -> dict:
    if isinstance(m, ReferenceDistribution):
        if not m.is_discrete:
            raise NotNormalized("reference is not discrete")
        return {int(x): float(p) for x, p in zip(m.support, m.probs)}
    if m.space != DISCRETE:
        raise NotNormalized("expected a discrete measure")
    _check_normalized(m.total_mass, "measure")
    return m.as_dict()


def tv_distance(
    p: Union[WeightedMeasure, ReferenceDistribution],
    q: Union[WeightedMeasure, ReferenceDistribution],
) -> float:
    """Total variation (1/2) sum |p - q| over the union of supports."""
    dp = _discrete_pmf(p)
    dq = _discrete_pmf(q)
    keys = set(dp) | set(dq)
    return 0.5 * sum(abs(dp.get(k, 0.0) - dq.get(k, 0.0)) for k in keys)


def _sorted_atoms(m: WeightedMeasure) -> tuple:
    if m.space == EUCLIDEAN:
        if m.dim != 1:
            raise DimensionUnsupported("wasserstein1_1d supports dim = 1 only")
        xs = m.points()[:, 0].astype(np.float64, copy=True)
    else:
        xs = m.points().astype(np.float64)
    _check_normalized(m.total_mass, "measure")
    w = m.weights() / m.total_mass
    order = np.argsort(xs, kind="stable")
    return xs[order], np.asarray(w, dtype=np.float64)[order]


def _w1_atoms_atoms(xp, wp, xq, wq) -> float:
    # exact integral of |F_p - F_q| between consecutive atom positions
    grid = np.concatenate([xp, xq])
    order = np.argsort(grid, kind="stable")
    grid = grid[order]
    jumps_p = np.concatenate([wp, np.zeros_like(wq)])[order]
    jumps_q = np.concatenate([np.zeros_like(wp), wq])[order]
    fp = np.cumsum(jumps_p)
    fq = np.cumsum(jumps_q)
    dx = np.diff(grid)
    return float(np.abs(fp[:-1] - fq[:-1]) @ dx)


def wasserstein1_atoms_vs_cdf(
    xs: np.ndarray,
    cdf,
    lo: float,
    hi: float,
    n_grid: int = W1_GRID_POINTS,
    weights: Optional[np.ndarray] = None,
) -> float:
    """W1 between a weighted sample and an analytic cdf by grid quadrature."""
    xs = np.asarray(xs, dtype=np.float64)
    grid = np.linspace(lo, hi, n_grid)
    if weights is None:
        s = np.sort(xs)
        f_emp = np.searchsorted(s, grid, side="right") / len(s)
    else:
        order = np.argsort(xs)
        s = xs[order]
        cw = np.cumsum(np.asarray(weights, dtype=np.float64)[order])
        cw /= cw[-1]
        idx = np.searchsorted(s, grid, side="right")
        f_emp = np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)
    f_ref = np.array([cdf(g) for g in grid])
    return float(np.trapezoid(np.abs(f_emp - f_ref), grid))


def wasserstein1_1d(
    p: Union[WeightedMeasure, ReferenceDistribution],
    q: Union[WeightedMeasure, ReferenceDistribution],
) -> float:
    """W1 on the line: exact between atomic measures, quadrature vs a cdf."""
    p_is_ref = isinstance(p, ReferenceDistribution)
    q_is_ref = isinstance(q, ReferenceDistribution)
    if p_is_ref and q_is_ref:
        raise NotNormalized("at least one side must be an empirical measure")
    if q_is_ref and q.is_discrete:
        q = q.as_measure()
        q_is_ref = False
    if p_is_ref and p.is_discrete:
        p = p.as_measure()
        p_is_ref = False
    if p_is_ref:
        p, q = q, p
        q_is_ref = True
    xp, wp = _sorted_atoms(p)
    if not q_is_ref:
        xq, wq = _sorted_atoms(q)
        return _w1_atoms_atoms(xp, wp, xq, wq)
    mu, sd = q.mean(), q.std()
    lo = min(float(xp[0]), mu - W1_GRID_STDS * sd)
    hi = max(float(xp[-1]), mu + W1_GRID_STDS * sd)
    return wasserstein1_atoms_vs_cdf(xp, q.cdf, lo, hi, weights=wp)


def mass_rate(trace: ConvergenceTrace) -> dict:
    """Final m_n(E)/n and its mean over the last 10% of the trace rows."""
    if len(trace) == 0:
        raise EmptyTrace("mass_rate needs a nonempty trace")
    k = max(1, len(trace) // 10)
    return {
        "final": float(trace.mass_per_step[-1]),
        "tail_mean": float(trace.mass_per_step[-k:].mean()),
    }


def lyapunov_probe(state: MvppState, spec: LyapunovSpec) -> dict:
    """Drift-condition margin over the current support, plus mP.V^(1/q)/n.

    The margin is a pure function of the support and the spec; float
    granularity on exponential-scale V limits meaningful margins to about
    1e-16 * V(x).
    """
    composed = state.composed
    if composed is None or not composed.has_mean:
        raise MeanUnavailable("lyapunov_probe needs an exact composed mean")
    worst = -np.inf
    worst_x = None
    for x in np.unique(state.m.points()):
        x = int(x)
        margin = composed.mean_integral(x, spec.V) - spec.theta * spec.V(x) - spec.K
        if margin > worst:
            worst, worst_x = margin, x
    n = max(1, state.step_count)
    w_int = state.mP.integrate(lambda x: spec.V(x) ** (1.0 / spec.q)) / n
    return {"max_margin": float(worst), "worst_point": worst_x, "mPW_over_n": w_int}


@dataclass
class SweepSummary:
    seeds: list
    final_distances: list
    mean: float
    max: float

    def to_json_obj(self, model: str = "", tolerance: Optional[float] = None) -> dict:
        obj = {
            "model": model,
            "seeds": list(self.seeds),
            "final_distances": list(self.final_distances),
            "mean": self.mean,
            "max": self.max,
        }
        if tolerance is not None:
            obj["tolerance"] = tolerance
            obj["pass"] = bool(self.max < tolerance)
        return obj


def _max_workers() -> int:
    cap = os.environ.get("MVPP_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def seed_sweep(config, seeds: Sequence[int], parallel: bool = True) -> SweepSummary:
    """Run independent replicas of an experiment config, one per seed.

    Each replica owns its RNG stream (keyed by seed); results are merged
    in input order, so the summary is deterministic regardless of
    scheduling. MVPP_THREADS caps process parallelism.
    """
    from .cli import replica_for_sweep  # local import: cli imports diagnostics

    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seed_sweep needs at least one seed")
    workers = min(_max_workers(), len(seeds))
    if parallel and workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(replica_for_sweep, [config] * len(seeds), seeds))
    else:
        results = [replica_for_sweep(config, s) for s in seeds]
    finals = []
    for res, seed in zip(results, seeds):
        if res.get("error"):
            err = RuntimeError(f"replica seed={seed} failed: {res['error']}")
            err.seed = seed
            raise err
        finals.append(float(res["final_distance"]))
    return SweepSummary(
        seeds=seeds,
        final_distances=finals,
        mean=float(np.mean(finals)),
        max=float(np.max(finals)),
    )
