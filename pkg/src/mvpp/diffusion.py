"""Euler-Maruyama paths with soft killing, and the self-interacting loop.

Paths follow dX = b(X) dt + dB on a fixed grid of width dt. Killing at
state-dependent rate kappa(x) <= kappa_max is realized by thinning: an
exponential clock rings at rate kappa_max and each ring is accepted with
probability kappa(x)/kappa_max, evaluated at the left-endpoint value of
the discretized path. This is exact given the discretized path and free
of the per-step Bernoulli bias at small dt.

Occupation measures use left-endpoint Riemann atoms of weight dt. The
self-interacting variant relocates, instead of dying, to a uniformly
chosen past grid atom and keeps a running histogram so that distance
traces do not require re-sorting the whole path.

All loops are hot kernels; random numbers are pre-drawn in chunks from
the caller's numpy Generator, so the numba and python backends consume
the stream identically and produce bit-identical paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from ._accel import ensure_compiled, hot, hot_closure
from .errors import HorizonCapExceeded, InvalidParams

PATH_CAP = 10**7  # hard cap on per-draw path length (grid steps)


@lru_cache(maxsize=64)  # closures cannot use numba's disk cache; reuse them
def linear_drift(c: float) -> Callable:
    """b(x) = -c x, compiled for the active backend."""
    c = float(c)

    @hot_closure
    def drift(x: float) -> float:
        return -c * x

    return drift


@lru_cache(maxsize=64)
def constant_rate(k: float) -> Callable:
    k = float(k)

    @hot_closure
    def rate(x: float) -> float:
        return k

    return rate


@dataclass
class KilledDiffusionSpec:
    """Drift, killing rate and discretization of a killed 1-d diffusion."""

    drift: Callable[[float], float]
    kill_rate: Callable[[float], float]
    kappa_max: float
    dt: float = 1e-3
    dim: int = 1
    horizon: Optional[float] = None  # deterministic time horizon, None = infinite
    x0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidParams("dt must be positive")
        if self.kappa_max <= 0:
            raise InvalidParams("kappa_max must be positive")
        if self.dim != 1:
            raise InvalidParams("diffusion paths are implemented for dim = 1")
        if self.horizon is not None and self.horizon <= 0:
            raise InvalidParams("a deterministic horizon must be positive")

    def compiled(self) -> "KilledDiffusionSpec":
        return KilledDiffusionSpec(
            drift=ensure_compiled(self.drift),
            kill_rate=ensure_compiled(self.kill_rate),
            kappa_max=self.kappa_max,
            dt=self.dt,
            dim=self.dim,
            horizon=self.horizon,
            x0=self.x0,
        )

    def drift_shell_report(self, radius: float, n_points: int = 16) -> dict:
        """Probe <b(x), x>/|x| on the shell |x| = radius (1-d: two points)."""
        pts = [radius, -radius]
        vals = [self.drift(float(p)) * p / abs(p) for p in pts]
        return {
            "radius": radius,
            "max_ratio": max(vals),
            "threshold": -1.5 * math.sqrt(self.kappa_max),
            "ok": max(vals) < -1.5 * math.sqrt(self.kappa_max),
        }


@hot
def _killed_path_chunk(
    drift,
    kill,
    kappa_max: float,
    dt: float,
    sqdt: float,
    y: float,
    t: float,
    next_ring: float,
    t_end: float,
    out: np.ndarray,
    n_out: int,
    normals: np.ndarray,
    exps: np.ndarray,
    us: np.ndarray,
):
    """Advance the path until killed, horizon, or a buffer runs out.

    Returns (status, n_out, y, t, next_ring, used_n, used_e, used_u);
    status 1 = killed, 2 = horizon reached, 0 = needs more buffer.
    """
    ni = 0
    ei = 0
    ui = 0
    while True:
        if t >= t_end:
            return 2, n_out, y, t, next_ring, ni, ei, ui
        if n_out >= out.shape[0] or ni >= normals.shape[0]:
            return 0, n_out, y, t, next_ring, ni, ei, ui
        out[n_out] = y
        n_out += 1
        t_next = t + dt
        while next_ring < t_next and next_ring < t_end:
            if ei >= exps.shape[0] or ui >= us.shape[0]:
                n_out -= 1  # replay this grid point on re-entry
                return 0, n_out, y, t, next_ring, ni, ei, ui
            if us[ui] * kappa_max < kill(y):
                ui += 1
                return 1, n_out, y, next_ring, next_ring, ni, ei, ui
            ui += 1
            next_ring += exps[ei] / kappa_max
            ei += 1
        y = y + drift(y) * dt + sqdt * normals[ni]
        ni += 1
        t = t_next


def sample_killed_path(
    spec: KilledDiffusionSpec,
    x0: float,
    rng: np.random.Generator,
    horizon: Optional[float] = None,
    cap: int = PATH_CAP,
) -> np.ndarray:
    """Grid positions visited before killing/horizon (weight dt each)."""
    t_end = horizon if horizon is not None else spec.horizon
    if t_end is None:
        t_end = np.inf
    drift = spec.drift
    kill = spec.kill_rate
    dt = spec.dt
    sqdt = math.sqrt(dt)
    # expected steps ~ 1/(kappa_max dt), but never beyond the horizon grid
    chunk = min(int(4.0 / (spec.kappa_max * dt)), 1 << 20)
    if math.isfinite(t_end):
        chunk = min(chunk, int(t_end / dt) + 2)
    chunk = max(256, chunk)
    out = np.empty(chunk)
    n_out = 0
    y = float(x0)
    t = 0.0
    next_ring = float(rng.exponential() / spec.kappa_max)
    while True:
        if n_out + chunk > out.shape[0]:
            if out.shape[0] * 2 > cap + chunk:
                raise HorizonCapExceeded(
                    f"path exceeded {cap} grid steps; check the kill rate/horizon"
                )
            grown = np.empty(out.shape[0] * 2)
            grown[:n_out] = out[:n_out]
            out = grown
        n_ring = int(chunk * dt * spec.kappa_max * 1.5 + 16)
        status, n_out, y, t, next_ring, _, _, _ = _killed_path_chunk(
            drift,
            kill,
            spec.kappa_max,
            dt,
            sqdt,
            y,
            t,
            next_ring,
            t_end,
            out,
            n_out,
            rng.standard_normal(chunk),
            rng.exponential(size=n_ring),
            rng.random(n_ring),
        )
        if status != 0:
            return out[:n_out].copy()
        if n_out > cap:
            raise HorizonCapExceeded(
                f"path exceeded {cap} grid steps; check the kill rate/horizon"
            )


@hot
def _self_interacting_chunk(
    drift,
    kill,
    kappa_max: float,
    dt: float,
    sqdt: float,
    y: float,
    next_ring: float,
    pos: np.ndarray,
    start: int,
    n_steps: int,
    normals: np.ndarray,
    exps: np.ndarray,
    us_accept: np.ndarray,
    us_reloc: np.ndarray,
    hist: np.ndarray,
    lo: float,
    inv_binw: float,
    n_jumps: int,
):
    """Advance n_steps; relocations resample a uniform past grid atom."""
    ei = 0
    ui = 0
    ri = 0
    nbins = hist.shape[0]
    for k in range(n_steps):
        i = start + k
        pos[i] = y
        b = int((y - lo) * inv_binw)
        if b < 0:
            b = 0
        elif b >= nbins:
            b = nbins - 1
        hist[b] += 1
        t_next = (i + 1) * dt
        while next_ring < t_next:
            if ei >= exps.shape[0] or ui >= us_accept.shape[0] or ri >= us_reloc.shape[0]:
                hist[b] -= 1  # step i replays in full on re-entry
                return -1, i, y, next_ring, n_jumps
            if us_accept[ui] * kappa_max < kill(y):
                j = int(us_reloc[ri] * (i + 1))
                if j > i:
                    j = i
                y = pos[j]
                n_jumps += 1
                ri += 1
            ui += 1
            next_ring += exps[ei] / kappa_max
            ei += 1
        y = y + drift(y) * dt + sqdt * normals[k]
    return 0, start + n_steps, y, next_ring, n_jumps


@dataclass
class OccupationResult:
    positions: np.ndarray  # grid atoms, weight dt each
    dt: float
    histogram: np.ndarray
    edges: np.ndarray
    n_jumps: int
    checkpoints: list  # (time, histogram snapshot) pairs


def self_interacting_occupation(
    spec: KilledDiffusionSpec,
    t_max: float,
    rng: np.random.Generator,
    hist_range: tuple = (-6.0, 6.0),
    n_bins: int = 4000,
    n_checkpoints: int = 50,
) -> OccupationResult:
    """Simulate the relocate-instead-of-die process; return its occupation.

    The returned positions array holds one atom of weight dt per grid
    step over [0, t_max); the running histogram supports cheap distance
    traces at the recorded checkpoints.
    """
    if t_max <= 0:
        raise InvalidParams("t_max must be positive")
    n = int(round(t_max / spec.dt))
    drift = spec.drift
    kill = spec.kill_rate
    dt = spec.dt
    sqdt = math.sqrt(dt)
    pos = np.empty(n)
    lo, hi = hist_range
    hist = np.zeros(n_bins, dtype=np.int64)
    inv_binw = n_bins / (hi - lo)
    edges = np.linspace(lo, hi, n_bins + 1)
    y = float(spec.x0)
    next_ring = float(rng.exponential() / spec.kappa_max)
    done = 0
    n_jumps = 0
    chunk = 1 << 21
    check_every = max(1, n // max(1, n_checkpoints))
    checkpoints = []
    next_check = check_every
    while done < n:
        m = min(chunk, n - done, next_check - done if next_check > done else chunk)
        n_ring = int(m * dt * spec.kappa_max * 1.6 + 64)
        normals = rng.standard_normal(m)
        exps = rng.exponential(size=n_ring)
        usa = rng.random(n_ring)
        usr = rng.random(n_ring)
        consumed = 0
        while consumed < m:
            status, new_done, y, next_ring, n_jumps = _self_interacting_chunk(
                drift, kill, spec.kappa_max, dt, sqdt, y, next_ring,
                pos, done, m - consumed,
                normals[consumed:], exps, usa, usr,
                hist, lo, inv_binw, n_jumps,
            )
            consumed += new_done - done
            done = new_done
            if status == -1:  # ring buffers exhausted mid-chunk: redraw
                n_ring = int((m - consumed) * dt * spec.kappa_max * 1.6 + 64)
                exps = rng.exponential(size=n_ring)
                usa = rng.random(n_ring)
                usr = rng.random(n_ring)
        if done >= next_check:
            checkpoints.append((done * dt, hist.copy()))
            next_check += check_every
    return OccupationResult(
        positions=pos, dt=dt, histogram=hist, edges=edges,
        n_jumps=n_jumps, checkpoints=checkpoints,
    )
