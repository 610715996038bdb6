"""Exact update-age and update-cycle statistics of the harvest-then-use
protocol.

Blocks come in three kinds: harvesting, sensing, and transmission.  A packet
sensed at block ``t0`` may be (re)transmitted up to block ``t0 + W``; each
transmission fails independently with the outage probability ``p_out``, and
the packet is dropped once the window closes.  Two delivered-packet delays
are computed, both in blocks:

* update age: delivery block minus sensing block, supported on ``1..W``;
* update cycle: gap between consecutive delivery blocks, supported on
  ``k >= 2`` with unbounded tail.

Every distribution is produced three ways and cross-checked in the test
suite: a closed form for deterministic arrivals, a Poisson-count closed form
for exponential arrivals, and a density-grid route for anything with a
density.  Results are dense ``Pmf`` objects whose probabilities, truncated
tail, and mean satisfy ``sum(probs) + tail_mass == 1`` within 1e-9.

Infinite sums are truncated on a geometric envelope: the retry-episode count
``m`` stops once ``(1 - p_suc)**(m+1)`` falls below half the tail budget,
and every count sequence is cut at a tenth of it.  If the realized tail
still exceeds the budget, the build retries with sharper cuts.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special

from .arrivals import (
    ArrivalModel,
    Deterministic,
    Exponential,
    default_step,
    deterministic_count,
    mean_energy,
    model_key,
    shared_grid,
)
from .errors import ConfigError, GridOverflowError, NoProgressError
from .params import ProtocolParams, validate

_NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Pmf:
    """Dense pmf on consecutive integer block counts.

    ``probs[j]`` is the probability of ``min_support + j`` blocks;
    ``tail_mass`` is whatever lies beyond the stored support; ``mean`` is
    the weighted sum over the stored support only (the truncated tail is
    excluded, bounded by ``tail_mass`` times the tail location).
    """

    min_support: int
    probs: np.ndarray
    tail_mass: float
    mean: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ConfigError("pmf needs a nonempty 1-d probability array")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ConfigError("pmf probabilities must be finite and >= 0")
        if not 0.0 <= self.tail_mass <= 1.0:
            raise ConfigError("tail mass must lie in [0, 1]")
        total = float(probs.sum()) + self.tail_mass
        if abs(total - 1.0) > _NORM_TOL:
            raise ConfigError(f"pmf mass is {total!r}, expected 1 within 1e-9")
        object.__setattr__(self, "probs", probs)

    def support(self) -> np.ndarray:
        return np.arange(self.min_support, self.min_support + self.probs.size)

    def prob(self, k: int) -> float:
        j = k - self.min_support
        if 0 <= j < self.probs.size:
            return float(self.probs[j])
        return 0.0

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.probs)


@dataclass(frozen=True)
class AgeCycleSummary:
    p_out: float
    p_suc: float
    mean_age: float
    mean_cycle: float
    limit_age: float
    limit_cycle: float


def _check_p_out(p_out: float) -> None:
    if not (0.0 <= p_out <= 1.0) or not math.isfinite(p_out):
        raise ConfigError(f"outage probability must lie in [0, 1], got {p_out!r}")


def _require_success(p_out: float) -> None:
    _check_p_out(p_out)
    if p_out >= 1.0:
        raise NoProgressError("every transmission fails at p_out = 1")


def _make_pmf(min_support: int, dense: np.ndarray) -> Pmf:
    dense = np.maximum(np.asarray(dense, dtype=float), 0.0)
    nz = np.flatnonzero(dense)
    if nz.size == 0:
        raise ConfigError("pmf came out empty")
    dense = dense[nz[0]: nz[-1] + 1]
    min_support += int(nz[0])
    tail = max(0.0, 1.0 - float(dense.sum()))
    mean = float(np.dot(dense, np.arange(min_support, min_support + dense.size)))
    return Pmf(min_support, dense, tail, mean)


def _pois_pmf(ks, lam):
    ks = np.asarray(ks, dtype=float)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(special.xlogy(ks, lam) - lam - special.gammaln(ks + 1.0))
    return out


def _pois_seq(lam: float, eps: float) -> np.ndarray:
    """Poisson pmf array from 0, truncated once the tail drops below eps."""
    if lam <= 0:
        return np.array([1.0])
    size = int(lam + 12.0 * math.sqrt(lam) + 40.0)
    while True:
        pmf = _pois_pmf(np.arange(size), lam)
        cum = np.cumsum(pmf)
        if cum[-1] >= 1.0 - eps:
            cut = int(np.searchsorted(cum, 1.0 - eps)) + 1
            return pmf[:cut]
        size *= 2


# ---------------------------------------------------------------------------
# counting distributions P{E(x) = i}, three routes

_S_CACHE: dict[tuple, np.ndarray] = {}
_Z_CACHE: dict[tuple, np.ndarray] = {}
_CACHE_LOCK = threading.Lock()


def _resolve_route(arrival: ArrivalModel, route: str) -> str:
    if route == "grid":
        if isinstance(arrival, Deterministic):
            raise ConfigError(
                "deterministic arrivals have no density; use the closed form"
            )
        return "grid"
    if isinstance(arrival, (Deterministic, Exponential)):
        return "closed"
    return "grid"


def _count_matrix(arrival: ArrivalModel, e_tx: float, w: int, route: str,
                  grid_step: float | None) -> np.ndarray:
    """``S[j, t] = P{E((t + 1) * e_tx) = j}`` for j = 0..w-2, t = 0..w-2.

    Column ``t`` belongs to the (t + 2)-th transmission attempt of a window;
    the matrix is independent of the outage probability.  Its entries do not
    depend on ``w`` either, so the cache keeps a single table per model at
    the largest window seen (grown geometrically) and hands out slices; a
    sweep over ``w`` then costs a handful of rebuilds instead of one
    quadratic build per window size.
    """
    if w < 2:
        return np.zeros((0, 0))
    route = _resolve_route(arrival, route)
    step = None if route == "closed" else (grid_step or default_step(arrival))
    key = (model_key(arrival), float(e_tx), route, step)
    with _CACHE_LOCK:
        hit = _S_CACHE.get(key)
    if hit is None or hit.shape[0] < w - 1:
        w_build = w if hit is None else max(w, (3 * (hit.shape[0] + 1)) // 2)
        targets = np.arange(1, w_build) * e_tx
        i_max = w_build - 2
        if route == "grid":
            grid = shared_grid(arrival, step, float(targets.max()))
            S = grid.count_pmf_table(targets, i_max)
        elif isinstance(arrival, Deterministic):
            r = deterministic_count(arrival, e_tx)
            S = np.zeros((i_max + 1, targets.size))
            for t in range(targets.size):
                j = (t + 1) * r
                if j <= i_max:
                    S[j, t] = 1.0
        else:
            lam = targets / arrival.rho
            S = _pois_pmf(np.arange(i_max + 1)[:, None], lam[None, :])
        with _CACHE_LOCK:
            _S_CACHE[key] = S
        hit = S
    return hit[: w - 1, : w - 1]


def _count_seq(arrival: ArrivalModel, target: float, eps: float, route: str,
               grid_step: float | None) -> np.ndarray:
    """pmf array of the number of harvesting blocks needed for ``target``."""
    if target <= 0:
        return np.array([1.0])
    if isinstance(arrival, Deterministic):
        n = deterministic_count(arrival, target)
        out = np.zeros(n + 1)
        out[n] = 1.0
        return out
    route = _resolve_route(arrival, route)
    step = None if route == "closed" else (grid_step or default_step(arrival))
    key = (model_key(arrival), float(target), float(eps), route, step)
    with _CACHE_LOCK:
        hit = _Z_CACHE.get(key)
    if hit is not None:
        return hit
    if route == "closed":
        seq = _pois_seq(target / arrival.rho, eps)
    else:
        seq = shared_grid(arrival, step, target).count_pmf_seq(target, eps)
    with _CACHE_LOCK:
        _Z_CACHE[key] = seq
    return seq


def zeta_seq(arrival: ArrivalModel, target: float, *, eps: float = 1e-12,
             grid_step: float | None = None, route: str = "auto") -> np.ndarray:
    """Harvest-count pmf used by the cycle assembly; index 0 is "no
    harvesting block needed"."""
    if target < 0:
        raise ConfigError("target energy must be >= 0")
    return _count_seq(arrival, target, eps, route, grid_step)


# ---------------------------------------------------------------------------
# update age

def _age_unnorm(w: int, p_out: float, S: np.ndarray) -> np.ndarray:
    """Unnormalized age weights ``u[k]`` for k = 2..w (u[0] = u[1] = 0).

    ``u[k] = sum over attempts n of p_out**(n-1) P{E((n-1) e_tx) = k - n}``.
    """
    u = np.zeros(w + 1)
    if w >= 2 and p_out > 0.0:
        powers = p_out ** np.arange(1, w)
        for t in range(w - 1):
            n = t + 2
            u[n: w + 1] += powers[t] * S[: w - n + 1, t]
    return u


def _age_parts(params: ProtocolParams, arrival: ArrivalModel, p_out: float,
               route: str, grid_step: float | None):
    S = _count_matrix(arrival, params.e_tx, params.w, route, grid_step)
    u = _age_unnorm(params.w, p_out, S)
    p_suc = (1.0 - p_out) * (1.0 + float(u.sum()))
    return u, p_suc


def _age_pmf_generic(params: ProtocolParams, arrival: ArrivalModel,
                     p_out: float, route: str,
                     grid_step: float | None) -> Pmf:
    _require_success(p_out)
    u, p_suc = _age_parts(params, arrival, p_out, route, grid_step)
    dense = np.zeros(params.w)
    dense[0] = (1.0 - p_out) / p_suc
    if params.w >= 2:
        dense[1:] = (1.0 - p_out) * u[2:] / p_suc
    return _make_pmf(1, dense)


def update_age_pmf_det(params: ProtocolParams, rho: float,
                       p_out: float) -> Pmf:
    """Closed form for deterministic arrivals: the age lives on the lattice
    ``1 + (n - 1)(e_tx/rho + 1)`` with geometrically decaying weights."""
    arrival = Deterministic(rho)
    validate(params, arrival)
    _require_success(p_out)
    r = deterministic_count(arrival, params.e_tx)
    n_hat = 1 + (params.w - 1) // (r + 1)
    p_suc = 1.0 - p_out ** n_hat
    k_last = 1 + (n_hat - 1) * (r + 1)
    dense = np.zeros(k_last)
    for n in range(1, n_hat + 1):
        k = 1 + (n - 1) * (r + 1)
        dense[k - 1] = (1.0 - p_out) * p_out ** (n - 1) / p_suc
    return _make_pmf(1, dense)


def update_age_pmf_exp(params: ProtocolParams, rho: float,
                       p_out: float) -> Pmf:
    """Closed form for exponential arrivals via Poisson harvest counts."""
    arrival = Exponential(rho)
    validate(params, arrival)
    return _age_pmf_generic(params, arrival, p_out, "closed", None)


def update_age_pmf_gen(params: ProtocolParams, arrival: ArrivalModel,
                       p_out: float, *,
                       grid_step: float | None = None) -> Pmf:
    """Density-grid route; valid for any arrival model with a density."""
    validate(params, arrival)
    return _age_pmf_generic(params, arrival, p_out, "grid", grid_step)


def update_age_pmf(params: ProtocolParams, arrival: ArrivalModel,
                   p_out: float, *, grid_step: float | None = None) -> Pmf:
    """Dispatch to the sharpest route available for the arrival model."""
    validate(params, arrival)
    if isinstance(arrival, Deterministic):
        return update_age_pmf_det(params, arrival.rho, p_out)
    return _age_pmf_generic(params, arrival, p_out, "auto", grid_step)


def success_probability(params: ProtocolParams, arrival: ArrivalModel,
                        p_out: float, *,
                        grid_step: float | None = None) -> float:
    """Probability that a sensed packet is delivered within its window."""
    validate(params, arrival)
    _check_p_out(p_out)
    if p_out >= 1.0:
        return 0.0
    if isinstance(arrival, Deterministic):
        r = deterministic_count(arrival, params.e_tx)
        n_hat = 1 + (params.w - 1) // (r + 1)
        return 1.0 - p_out ** n_hat
    _, p_suc = _age_parts(params, arrival, p_out, "auto", grid_step)
    return p_suc


def update_age_mean_det(params: ProtocolParams, rho: float,
                        p_out: float) -> float:
    arrival = Deterministic(rho)
    validate(params, arrival)
    _require_success(p_out)
    r = deterministic_count(arrival, params.e_tx)
    n_hat = 1 + (params.w - 1) // (r + 1)
    p_suc = 1.0 - p_out ** n_hat
    n = np.arange(1, n_hat + 1)
    terms = (1.0 + (n - 1) * (r + 1)) * p_out ** (n - 1)
    return float((1.0 - p_out) / p_suc * terms.sum())


def _age_mean_generic(params: ProtocolParams, arrival: ArrivalModel,
                      p_out: float, route: str,
                      grid_step: float | None) -> float:
    _require_success(p_out)
    u, p_suc = _age_parts(params, arrival, p_out, route, grid_step)
    weighted = float(np.dot(np.arange(params.w + 1), u))
    return (1.0 - p_out) / p_suc * (1.0 + weighted)


def update_age_mean_exp(params: ProtocolParams, rho: float,
                        p_out: float) -> float:
    arrival = Exponential(rho)
    validate(params, arrival)
    return _age_mean_generic(params, arrival, p_out, "closed", None)


def update_age_mean_gen(params: ProtocolParams, arrival: ArrivalModel,
                        p_out: float, *,
                        grid_step: float | None = None) -> float:
    validate(params, arrival)
    return _age_mean_generic(params, arrival, p_out, "grid", grid_step)


def update_age_mean(params: ProtocolParams, arrival: ArrivalModel,
                    p_out: float, *, grid_step: float | None = None) -> float:
    validate(params, arrival)
    if isinstance(arrival, Deterministic):
        return update_age_mean_det(params, arrival.rho, p_out)
    return _age_mean_generic(params, arrival, p_out, "auto", grid_step)


def update_age_limit(rho: float, e_tx: float, p_out: float) -> float:
    """Large-window limit of the mean update age (model-free)."""
    _check_p_out(p_out)
    if p_out >= 1.0:
        return math.inf
    return 1.0 + p_out / (1.0 - p_out) * (e_tx / rho + 1.0)


def update_cycle_limit(rho: float, e_sen: float, e_tx: float,
                       p_out: float) -> float:
    """Large-window limit of the mean update cycle (model-free)."""
    _check_p_out(p_out)
    if p_out >= 1.0:
        return math.inf
    return (2.0 + (e_sen + e_tx) / rho
            + p_out / (1.0 - p_out) * (e_tx / rho + 1.0))


# ---------------------------------------------------------------------------
# update cycle

def iota_seq(params: ProtocolParams, arrival: ArrivalModel, p_out: float, *,
             grid_step: float | None = None,
             route: str = "auto") -> np.ndarray:
    """Joint pmf of "packet delivered at age l": index l = 0..w, entry 0 is
    zero, and the entries sum to the success probability."""
    validate(params, arrival)
    _require_success(p_out)
    u, _ = _age_parts(params, arrival, p_out, route, grid_step)
    out = (1.0 - p_out) * u
    out[1] = 1.0 - p_out
    return out


def _fail_weights(w: int, p_out: float, u: np.ndarray) -> np.ndarray:
    """``c[l]``: joint weight of "window closed with the last transmission
    at offset l, all attempts failed", before the post-window recovery."""
    c = p_out * u
    c[1] = p_out
    return c


def _pin_mass(seq: np.ndarray, total: float) -> np.ndarray:
    """Scale a branch pmf so it carries exactly ``total`` probability.

    The total mass of the failed-window branch is fixed by the law of total
    probability (success and failure partition every window), so only the
    shape of ``seq`` is informative.  The raw sum drifts from the exact
    branch mass for two reasons: grid quadrature bias, and the recharge
    count being glued onto the attempt positions as a fresh stationary
    count, which is only exact for memoryless arrivals.  Left uncorrected
    the defect compounds over the retry-episode chain and turns into
    phantom tail mass that no support extension can recover; pinning keeps
    the episode count exactly geometric in the success probability.
    """
    got = float(seq.sum())
    if total <= 0.0:
        return np.zeros_like(seq)
    if got <= 0.0:
        return seq
    if abs(got / total - 1.0) > 0.25:
        raise GridOverflowError(
            "failed-branch mass defect above 25%; the arrival model is too "
            "irregular for the counting grid, refine grid_step")
    return seq * (total / got)


def vartheta_seq(params: ProtocolParams, arrival: ArrivalModel, p_out: float,
                 *, eps: float = 1e-12, grid_step: float | None = None,
                 route: str = "auto") -> np.ndarray:
    """Joint pmf of the post-window recovery length of a failed window;
    index v >= 0 counts harvesting blocks past the window end, and the
    entries sum to the failure probability ``1 - p_suc`` exactly (the
    branch total is pinned; the convolution only supplies the shape)."""
    validate(params, arrival)
    _require_success(p_out)
    u, p_suc = _age_parts(params, arrival, p_out, route, grid_step)
    c = _fail_weights(params.w, p_out, u)
    z1 = _count_seq(arrival, params.e_tx, eps, route, grid_step)
    raw = np.convolve(c[1:], z1)[params.w - 1:]
    return _pin_mass(raw, max(1.0 - p_suc, 0.0))


def _cycle_pmf_generic(params: ProtocolParams, arrival: ArrivalModel,
                       p_out: float, eps_tail: float, route: str,
                       grid_step: float | None) -> Pmf:
    _require_success(p_out)
    if not (0.0 < eps_tail < 1.0):
        raise ConfigError("tail budget must lie in (0, 1)")
    w = params.w
    route = "closed" if _resolve_route(arrival, route) == "closed" else "grid"
    merged_poisson = route == "closed" and isinstance(arrival, Exponential)
    u, p_suc = _age_parts(params, arrival, p_out, route, grid_step)
    iota1 = (1.0 - p_out) * u[1:]
    iota1[0] = 1.0 - p_out
    c = _fail_weights(w, p_out, u)
    q = max(1.0 - p_suc, 0.0)

    for attempt in range(3):
        shrink = 1e-4 ** attempt
        eps_m = 0.5 * eps_tail * shrink
        eps_seq = 0.1 * eps_tail * shrink
        if q <= eps_m:
            m_hat = 0
        else:
            m_hat = max(0, math.ceil(math.log(eps_m) / math.log(q)) - 1)

        z1 = _count_seq(arrival, params.e_tx, eps_seq, route, grid_step)
        theta = _pin_mass(np.convolve(c[1:], z1)[w - 1:], q)
        pieces: list[tuple[int, np.ndarray]] = []
        if merged_poisson:
            lam0 = (params.e_sen + params.e_tx) / arrival.rho
            lam_step = params.e_sen / arrival.rho
            tp = np.array([1.0])
            for m in range(m_hat + 1):
                base = _pois_seq(lam0 + m * lam_step, eps_seq)
                full = np.convolve(base, tp) if tp.size > 1 else base
                pieces.append((m * (w + 1) + 2, np.convolve(full, iota1)))
                if m < m_hat:
                    tp = np.convolve(tp, theta)
        else:
            z_init = _count_seq(arrival, params.e_sen + params.e_tx, eps_seq,
                                route, grid_step)
            step_seq = np.convolve(
                _count_seq(arrival, params.e_sen, eps_seq, route, grid_step),
                theta,
            )
            full = z_init
            for m in range(m_hat + 1):
                pieces.append((m * (w + 1) + 2, np.convolve(full, iota1)))
                if m < m_hat:
                    full = np.convolve(full, step_seq)

        k_max = max(off + arr.size for off, arr in pieces)
        dense = np.zeros(k_max)
        for off, arr in pieces:
            dense[off: off + arr.size] += arr
        pmf = _make_pmf(0, dense)
        if pmf.tail_mass <= eps_tail:
            return pmf
    return pmf


def update_cycle_pmf_det(params: ProtocolParams, rho: float, p_out: float,
                         *, eps_tail: float = 1e-9) -> Pmf:
    """Closed form for deterministic arrivals: a lattice built from the
    per-window attempt count and the fixed failure-episode length."""
    arrival = Deterministic(rho)
    validate(params, arrival)
    _require_success(p_out)
    if not (0.0 < eps_tail < 1.0):
        raise ConfigError("tail budget must lie in (0, 1)")
    r_t = deterministic_count(arrival, params.e_tx)
    r_s = deterministic_count(arrival, params.e_sen)
    n_hat = 1 + (params.w - 1) // (r_t + 1)
    q = p_out ** n_hat
    if q <= 0.0:
        m_hat = 0
    else:
        m_hat = max(0, math.ceil(math.log(0.5 * eps_tail) / math.log(q)) - 1)
    episode = r_s + n_hat * (r_t + 1) + 1
    k_last = r_s + n_hat * (r_t + 1) + 1 + m_hat * episode
    dense = np.zeros(k_last + 1)
    for m in range(m_hat + 1):
        for n in range(1, n_hat + 1):
            k = r_s + n * (r_t + 1) + 1 + m * episode
            dense[k] += (1.0 - p_out) * p_out ** (n - 1 + m * n_hat)
    return _make_pmf(0, dense)


def update_cycle_pmf_exp(params: ProtocolParams, rho: float, p_out: float,
                         *, eps_tail: float = 1e-9) -> Pmf:
    """Closed form for exponential arrivals: Poisson counts throughout, with
    the per-episode harvest targets merged by Poisson additivity."""
    arrival = Exponential(rho)
    validate(params, arrival)
    return _cycle_pmf_generic(params, arrival, p_out, eps_tail, "closed", None)


def update_cycle_pmf_gen(params: ProtocolParams, arrival: ArrivalModel,
                         p_out: float, *, eps_tail: float = 1e-9,
                         grid_step: float | None = None) -> Pmf:
    """Density-grid route; valid for any arrival model with a density."""
    validate(params, arrival)
    return _cycle_pmf_generic(params, arrival, p_out, eps_tail, "grid",
                              grid_step)


def update_cycle_pmf(params: ProtocolParams, arrival: ArrivalModel,
                     p_out: float, *, eps_tail: float = 1e-9,
                     grid_step: float | None = None) -> Pmf:
    """Dispatch to the sharpest route available for the arrival model."""
    validate(params, arrival)
    if isinstance(arrival, Deterministic):
        return update_cycle_pmf_det(params, arrival.rho, p_out,
                                    eps_tail=eps_tail)
    return _cycle_pmf_generic(params, arrival, p_out, eps_tail, "auto",
                              grid_step)


def update_cycle_mean_det(params: ProtocolParams, rho: float,
                          p_out: float) -> float:
    arrival = Deterministic(rho)
    validate(params, arrival)
    _require_success(p_out)
    r_t = deterministic_count(arrival, params.e_tx)
    r_s = deterministic_count(arrival, params.e_sen)
    n_hat = 1 + (params.w - 1) // (r_t + 1)
    q = p_out ** n_hat
    n = np.arange(1, n_hat + 1)
    attempts = float(np.dot(n, p_out ** (n - 1)))
    return (q / (1.0 - q) * (1.0 + n_hat + r_s + n_hat * r_t)
            + r_s + 1.0
            + (r_t + 1.0) * (1.0 - p_out) / (1.0 - q) * attempts)


def _cycle_mean_generic(params: ProtocolParams, arrival: ArrivalModel,
                        p_out: float, route: str,
                        grid_step: float | None) -> float:
    _require_success(p_out)
    w = params.w
    route = _resolve_route(arrival, route)
    u, p_suc = _age_parts(params, arrival, p_out, route, grid_step)
    mean_age = (1.0 - p_out) / p_suc * (1.0 + float(np.dot(np.arange(w + 1), u)))
    c = _fail_weights(w, p_out, u)
    z1 = _count_seq(arrival, params.e_tx, 1e-12, route, grid_step)
    if route == "closed":
        # harvest-count means are exact for the closed routes
        rho_mean = mean_energy(arrival)
        mean_init = (params.e_sen + params.e_tx) / rho_mean
        mean_sen = params.e_sen / rho_mean
        mean_count = params.e_tx / rho_mean
    else:
        # take the count means from the same discretized counting law that
        # assembles the pmf, so both mean routes agree to truncation level
        # instead of drifting apart by the grid bias
        def _seq_mean(target: float) -> float:
            seq = _count_seq(arrival, target, 1e-12, route, grid_step)
            return float(np.dot(np.arange(seq.size), seq))

        mean_init = _seq_mean(params.e_sen + params.e_tx)
        mean_sen = _seq_mean(params.e_sen)
        mean_count = float(np.dot(np.arange(z1.size), z1))
    z_sum = float(z1.sum())
    z = np.zeros(w)
    z[: min(w, z1.size)] = z1[: min(w, z1.size)]
    # mean post-window recovery of a failed window, jointly with the failure
    # event: the harvest count for one more transmission, minus the
    # harvesting blocks already spent inside the window
    idx = np.arange(w)
    head_mass = np.concatenate(([0.0], np.cumsum(z)))
    head_mean = np.concatenate(([0.0], np.cumsum(idx * z)))
    t = w - np.arange(1, w + 1)  # harvesting blocks spent when the last
    #                              attempt sat at offset l = 1..w
    a = mean_count - head_mean[t] - t * (z_sum - head_mass[t])
    vbar_num = float(np.dot(c[1:], a))
    fail_mass = max(1.0 - p_suc, 0.0)
    # pin the failed-branch mass exactly as the pmf assembly does
    theta_mass = float(np.dot(c[1:], z_sum - head_mass[t]))
    if fail_mass > 0.0 and theta_mass > 0.0:
        vbar_num *= fail_mass / theta_mass
    return (mean_init + mean_age + 1.0
            + (fail_mass * (mean_sen + w + 1.0) + vbar_num) / p_suc)


def update_cycle_mean_exp(params: ProtocolParams, rho: float,
                          p_out: float) -> float:
    arrival = Exponential(rho)
    validate(params, arrival)
    return _cycle_mean_generic(params, arrival, p_out, "closed", None)


def update_cycle_mean_gen(params: ProtocolParams, arrival: ArrivalModel,
                          p_out: float, *,
                          grid_step: float | None = None) -> float:
    validate(params, arrival)
    return _cycle_mean_generic(params, arrival, p_out, "grid", grid_step)


def update_cycle_mean(params: ProtocolParams, arrival: ArrivalModel,
                      p_out: float, *,
                      grid_step: float | None = None) -> float:
    validate(params, arrival)
    if isinstance(arrival, Deterministic):
        return update_cycle_mean_det(params, arrival.rho, p_out)
    return _cycle_mean_generic(params, arrival, p_out, "auto", grid_step)


def summary(params: ProtocolParams, arrival: ArrivalModel, p_out: float, *,
            grid_step: float | None = None) -> AgeCycleSummary:
    """Headline numbers: success probability, both means, both limits."""
    validate(params, arrival)
    _require_success(p_out)
    rho = mean_energy(arrival)
    return AgeCycleSummary(
        p_out=p_out,
        p_suc=success_probability(params, arrival, p_out, grid_step=grid_step),
        mean_age=update_age_mean(params, arrival, p_out, grid_step=grid_step),
        mean_cycle=update_cycle_mean(params, arrival, p_out,
                                     grid_step=grid_step),
        limit_age=update_age_limit(rho, params.e_tx, p_out),
        limit_cycle=update_cycle_limit(rho, params.e_sen, params.e_tx, p_out),
    )
