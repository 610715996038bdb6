"""Block-level Monte Carlo of the harvest-then-use sensor.

The sensor walks block by block: harvest while the battery cannot fund a
sensing plus a transmission, sense (which forces a transmission in the next
block), retransmit whenever the battery covers one transmission and the
window is still open, and drop the packet once it closes.  The loop records
per-delivery ages, gaps between deliveries, dropped windows between
deliveries, and the battery level right after every transmission.

One ``numpy`` Generator drives all randomness, drawn in a fixed order
(arrival draws on harvesting blocks, one uniform per transmission), so a
``(params, seed)`` pair replays bit-identically.  Replications get
independent substreams spawned from the master seed and are merged in
submission order, keeping parallel runs deterministic as well.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .arrivals import (
    ArrivalModel,
    Deterministic,
    Exponential,
    GammaArrival,
    Tabulated,
)
from .delay import Pmf, _make_pmf
from .errors import EmptySamplesError, NoProgressError, NonPositiveError
from .params import ProtocolParams, validate

_KIND_DET, _KIND_EXP, _KIND_GAMMA, _KIND_TAB = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class SimResult:
    """Post-warmup samples of one run (or merged replications)."""

    update_ages: np.ndarray          # blocks, one per delivered update
    update_cycles: np.ndarray        # blocks between consecutive deliveries
    fails_between_updates: np.ndarray  # dropped windows inside each cycle
    post_tb_energies: np.ndarray     # battery right after each transmission
    n_updates: int
    warmup_discarded: int
    seed: int
    blocks_run: int


@njit(cache=True, nogil=True)
def _run_blocks(w, e_sen, e_tx, p_out, n_updates, warmup,
                kind, rho, g_shape, g_scale, tab_cum, tab_step, rng):
    ages = np.zeros(n_updates, np.int64)
    n_cyc = n_updates - 1 if n_updates > 1 else 0
    cycles = np.zeros(n_cyc, np.int64)
    fails = np.zeros(n_cyc, np.int64)
    post = np.empty(4096, np.float64)
    n_post = 0

    battery = 0.0
    t = 0
    t_sb = np.int64(-1)       # pending packet's sensing block, -1 if none
    force_tb = False          # a sensing block always transmits next block
    t_stb_prev = np.int64(-1)
    fails_cur = 0
    warmed = 0
    recorded = 0

    while recorded < n_updates:
        t += 1
        if t_sb >= 0 and not force_tb and t - t_sb > w:
            # window closed before this block: drop, then act as usual
            fails_cur += 1
            t_sb = np.int64(-1)

        if force_tb:
            do_tb = True
            force_tb = False
        elif t_sb >= 0:
            do_tb = battery >= e_tx
        else:
            do_tb = False

        if do_tb:
            battery -= e_tx
            if battery < 0.0:
                battery = 0.0  # comparison dust only; spends never overdraw
            if warmed >= warmup:
                if n_post == post.shape[0]:
                    grown = np.empty(n_post * 2, np.float64)
                    grown[:n_post] = post
                    post = grown
                post[n_post] = battery
                n_post += 1
            if rng.random() >= p_out:
                if warmed < warmup:
                    warmed += 1
                else:
                    ages[recorded] = t - t_sb
                    if recorded >= 1:
                        cycles[recorded - 1] = t - t_stb_prev
                        fails[recorded - 1] = fails_cur
                    recorded += 1
                t_stb_prev = t
                fails_cur = 0
                t_sb = np.int64(-1)
        elif t_sb < 0 and battery >= e_sen + e_tx:
            battery -= e_sen
            t_sb = np.int64(t)
            force_tb = True
        else:
            if kind == 0:
                battery += rho
            elif kind == 1:
                battery += rng.exponential(rho)
            elif kind == 2:
                battery += rng.gamma(g_shape, g_scale)
            else:
                j = np.searchsorted(tab_cum, rng.random(), side="right")
                if j >= tab_cum.shape[0]:
                    j = tab_cum.shape[0] - 1
                frac = rng.random()
                if j == 0:
                    battery += frac * 0.5 * tab_step
                else:
                    battery += (j - 0.5 + frac) * tab_step
        assert battery >= 0.0

    return ages, cycles, fails, post[:n_post].copy(), t


def _kernel_args(arrival: ArrivalModel):
    empty = np.empty(0, np.float64)
    if isinstance(arrival, Deterministic):
        return _KIND_DET, arrival.rho, 0.0, 0.0, empty, 0.0
    if isinstance(arrival, Exponential):
        return _KIND_EXP, arrival.rho, 0.0, 0.0, empty, 0.0
    if isinstance(arrival, GammaArrival):
        return _KIND_GAMMA, 0.0, arrival.shape, arrival.scale, empty, 0.0
    if isinstance(arrival, Tabulated):
        cum = np.cumsum(arrival.values * arrival.step)
        cum /= cum[-1]  # sampling needs an exact top end
        return _KIND_TAB, 0.0, 0.0, 0.0, cum, arrival.step
    raise TypeError(f"unknown arrival model {arrival!r}")


def simulate(params: ProtocolParams, arrival: ArrivalModel, p_out: float,
             n_updates: int, seed: int, warmup: int = 100) -> SimResult:
    """Run until ``n_updates`` deliveries are recorded after ``warmup``
    discarded ones."""
    validate(params, arrival)
    if not 0.0 <= p_out <= 1.0:
        raise NoProgressError(f"outage probability {p_out!r} not in [0, 1]")
    if p_out >= 1.0:
        raise NoProgressError("p_out = 1 never delivers an update")
    if n_updates < 1:
        raise NonPositiveError("need at least one update")
    if warmup < 0:
        raise NonPositiveError("warmup must be >= 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    kind, rho, g_shape, g_scale, tab_cum, tab_step = _kernel_args(arrival)
    ages, cycles, fails, post, blocks = _run_blocks(
        params.w, params.e_sen, params.e_tx, p_out, n_updates, warmup,
        kind, rho, g_shape, g_scale, tab_cum, tab_step, rng,
    )
    return SimResult(ages, cycles, fails, post, n_updates, warmup, seed,
                     int(blocks))


def replicate(params: ProtocolParams, arrival: ArrivalModel, p_out: float,
              n_updates: int, seed: int, warmup: int = 100, reps: int = 1,
              max_workers: int | None = None) -> SimResult:
    """Independent replications on substreams spawned from ``seed``, merged
    in replication order regardless of scheduling."""
    if reps < 1:
        raise NonPositiveError("need at least one replication")
    if reps == 1:
        return simulate(params, arrival, p_out, n_updates, seed, warmup)
    validate(params, arrival)
    children = np.random.SeedSequence(seed).spawn(reps)

    def one(ss) -> SimResult:
        rng = np.random.Generator(np.random.PCG64(ss))
        kind, rho, g_shape, g_scale, tab_cum, tab_step = _kernel_args(arrival)
        ages, cycles, fails, post, blocks = _run_blocks(
            params.w, params.e_sen, params.e_tx, p_out, n_updates, warmup,
            kind, rho, g_shape, g_scale, tab_cum, tab_step, rng,
        )
        return SimResult(ages, cycles, fails, post, n_updates, warmup, seed,
                         int(blocks))

    if p_out >= 1.0:
        raise NoProgressError("p_out = 1 never delivers an update")
    if n_updates < 1:
        raise NonPositiveError("need at least one update")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        parts = list(pool.map(one, children))
    return SimResult(
        np.concatenate([p.update_ages for p in parts]),
        np.concatenate([p.update_cycles for p in parts]),
        np.concatenate([p.fails_between_updates for p in parts]),
        np.concatenate([p.post_tb_energies for p in parts]),
        n_updates * reps,
        warmup,
        seed,
        sum(p.blocks_run for p in parts),
    )


def empirical_pmf(samples) -> Pmf:
    """Dense pmf of integer samples; the mean is the exact sample mean."""
    arr = np.asarray(samples)
    if arr.size == 0:
        raise EmptySamplesError("no samples to build a pmf from")
    arr = arr.astype(np.int64)
    lo = int(arr.min())
    counts = np.bincount(arr - lo)
    pmf = _make_pmf(lo, counts / arr.size)
    return Pmf(pmf.min_support, pmf.probs, 0.0, float(arr.mean()))


@dataclass(frozen=True)
class CompareResult:
    tv_distance: float
    ks_statistic: float
    mean_gap: float


def compare(analytic: Pmf, empirical: Pmf) -> CompareResult:
    """Distribution distances on the union support; truncated tail mass
    counts as disagreement."""
    lo = min(analytic.min_support, empirical.min_support)
    hi = max(analytic.min_support + analytic.probs.size,
             empirical.min_support + empirical.probs.size)
    p = np.zeros(hi - lo)
    q = np.zeros(hi - lo)
    p[analytic.min_support - lo:
      analytic.min_support - lo + analytic.probs.size] = analytic.probs
    q[empirical.min_support - lo:
      empirical.min_support - lo + empirical.probs.size] = empirical.probs
    tv = 0.5 * (float(np.abs(p - q).sum())
                + analytic.tail_mass + empirical.tail_mass)
    ks = float(np.max(np.abs(np.cumsum(p) - np.cumsum(q))))
    return CompareResult(tv, ks, abs(analytic.mean - empirical.mean))
