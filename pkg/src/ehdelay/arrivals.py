"""Energy-arrival models and their grid discretization.

Battery increments per harvesting block are i.i.d. nonnegative draws from one
of four models: deterministic, exponential, gamma, or a tabulated density.
Two distribution-level objects drive every downstream formula:

* the stationary-excess density of the increment (the residual charge left
  right after a transmission, for non-deterministic models), and
* the counting distribution ``P{E(x) = i}``: the number of harvesting blocks
  needed before the accumulated charge first reaches a target ``x``.

Except for the deterministic and exponential closed forms, everything is
computed on a uniform grid of cell-averaged masses.  Cell ``j`` is centered
at ``j * step`` and covers ``[(j - 1/2) * step, (j + 1/2) * step)``, so
convolving mass vectors is midpoint-unbiased.  Cumulative queries are
exclusive prefix sums, i.e. ``G_i(x) = P{level after i harvests < x}``,
which matches the ``level >= x`` threshold rule used by the protocol (a
deterministic level sitting exactly at ``x`` counts as reached).
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special
from scipy.signal import fftconvolve

from .errors import (
    ConfigError,
    EmptySamplesError,
    GridOverflowError,
    NonIntegerMultipleError,
    NonPositiveError,
)

#: default grid step is rho / GRID_DIVISOR
GRID_DIVISOR = 256
DEFAULT_MAX_POINTS = 1 << 22
#: total cells kept across cached ladder levels (~32 MB of doubles)
_LADDER_BUDGET_CELLS = 4_000_000
_REL_TOL = 1e-9


@dataclass(frozen=True)
class Deterministic:
    """Every harvesting block adds exactly ``rho`` micro-joules."""

    rho: float


@dataclass(frozen=True)
class Exponential:
    """Exponential increments with mean ``rho`` micro-joules."""

    rho: float


@dataclass(frozen=True)
class GammaArrival:
    """Gamma increments; mean is ``shape * scale`` micro-joules."""

    shape: float
    scale: float


@dataclass(frozen=True, eq=False)
class Tabulated:
    """User-supplied density sampled on a uniform energy grid.

    ``values[j]`` is the cell-averaged density (per micro-joule) of the cell
    centered at ``j * step``; the table must carry all of the mass.
    """

    step: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ConfigError("tabulated density must be a nonempty 1-d array")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise NonPositiveError("tabulated grid step must be positive")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ConfigError("tabulated density values must be finite and >= 0")
        total = float(vals.sum() * self.step)
        if abs(total - 1.0) > _REL_TOL:
            raise ConfigError(
                f"tabulated density integrates to {total!r}, expected 1 "
                "within 1e-9 (normalize the table first)"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


ArrivalModel = Union[Deterministic, Exponential, GammaArrival, Tabulated]


def mean_energy(arrival: ArrivalModel) -> float:
    """Mean harvested energy per block, micro-joules."""
    if isinstance(arrival, (Deterministic, Exponential)):
        return arrival.rho
    if isinstance(arrival, GammaArrival):
        return arrival.shape * arrival.scale
    if isinstance(arrival, Tabulated):
        centers = arrival.step * np.arange(arrival.values.size)
        return float(np.sum(arrival.values * arrival.step * centers))
    raise TypeError(f"unknown arrival model {arrival!r}")


def model_key(arrival: ArrivalModel) -> tuple:
    """Hashable identity used by internal caches."""
    if isinstance(arrival, Deterministic):
        return ("det", arrival.rho)
    if isinstance(arrival, Exponential):
        return ("exp", arrival.rho)
    if isinstance(arrival, GammaArrival):
        return ("gamma", arrival.shape, arrival.scale)
    if isinstance(arrival, Tabulated):
        return ("tab", arrival.step, hash(arrival.values.tobytes()))
    raise TypeError(f"unknown arrival model {arrival!r}")


def _tabulated_edges(tab: Tabulated) -> tuple[np.ndarray, np.ndarray]:
    # cdf knots at cell edges; density is constant within each cell
    masses = tab.values * tab.step
    edges = (np.arange(masses.size) + 0.5) * tab.step
    edges = np.concatenate(([0.0], edges))
    cdf = np.concatenate(([0.0], np.cumsum(masses)))
    return edges, np.minimum(cdf, 1.0)


def cdf(arrival: ArrivalModel, x) -> np.ndarray | float:
    """P{increment <= x}; vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    if isinstance(arrival, Deterministic):
        out = (x >= arrival.rho).astype(float)
    elif isinstance(arrival, Exponential):
        out = -np.expm1(-np.maximum(x, 0.0) / arrival.rho)
    elif isinstance(arrival, GammaArrival):
        out = special.gammainc(arrival.shape, np.maximum(x, 0.0) / arrival.scale)
    elif isinstance(arrival, Tabulated):
        edges, knots = _tabulated_edges(arrival)
        out = np.interp(np.maximum(x, 0.0), edges, knots, right=1.0)
    else:
        raise TypeError(f"unknown arrival model {arrival!r}")
    return out if out.ndim else float(out)


def _integrated_survival(arrival: ArrivalModel, x) -> np.ndarray | float:
    """E[min(increment, x)] = integral of the survival function on [0, x]."""
    x = np.asarray(np.maximum(x, 0.0), dtype=float)
    if isinstance(arrival, Deterministic):
        out = np.minimum(x, arrival.rho)
    elif isinstance(arrival, Exponential):
        out = -arrival.rho * np.expm1(-x / arrival.rho)
    elif isinstance(arrival, GammaArrival):
        k, th = arrival.shape, arrival.scale
        z = x / th
        out = k * th * special.gammainc(k + 1.0, z) + x * special.gammaincc(k, z)
    elif isinstance(arrival, Tabulated):
        edges, knots = _tabulated_edges(arrival)
        # survival is piecewise linear between edges: integrate segment-wise
        seg = np.diff(edges) * (1.0 - 0.5 * (knots[:-1] + knots[1:]))
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(seg) - 1)
        x0 = edges[idx]
        f0 = knots[idx]
        slope = (knots[idx + 1] - f0) / (edges[idx + 1] - x0)
        dx = np.clip(x - x0, 0.0, edges[idx + 1] - x0)
        out = cum[idx] + dx * (1.0 - f0) - 0.5 * slope * dx * dx
        out = np.where(x >= edges[-1], cum[-1] + 0.0 * x, out)
    else:
        raise TypeError(f"unknown arrival model {arrival!r}")
    return out if out.ndim else float(out)


def stationary_excess_cdf(arrival: ArrivalModel, x) -> np.ndarray | float:
    """Distribution of the residual charge right after a transmission.

    For a deterministic model the residual is exactly zero; otherwise this is
    the stationary-excess transform of the increment distribution.
    """
    if isinstance(arrival, Deterministic):
        x = np.asarray(x, dtype=float)
        out = (x >= 0).astype(float)
        return out if out.ndim else float(out)
    rho = mean_energy(arrival)
    if rho <= 0:
        raise NonPositiveError("mean harvested energy must be positive")
    out = np.asarray(_integrated_survival(arrival, x)) / rho
    return out if out.ndim else float(out)


def _cell_edges(step: float, n: int) -> np.ndarray:
    edges = (np.arange(n + 1) - 0.5) * step
    edges[0] = 0.0
    return edges


def increment_cell_masses(arrival: ArrivalModel, step: float, n: int) -> np.ndarray:
    """Cell masses of the increment density on ``n`` midpoint-centered cells."""
    edges = _cell_edges(step, n)
    c = cdf(arrival, edges)
    return np.maximum(np.diff(c), 0.0)


def excess_cell_masses(arrival: ArrivalModel, step: float, n: int) -> np.ndarray:
    """Cell masses of the stationary-excess density."""
    rho = mean_energy(arrival)
    if rho <= 0:
        raise NonPositiveError("mean harvested energy must be positive")
    edges = _cell_edges(step, n)
    s = np.asarray(_integrated_survival(arrival, edges)) / rho
    return np.maximum(np.diff(s), 0.0)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell-averaged density on a uniform grid plus the mass beyond it.

    Invariant: ``step * values.sum() + truncation_mass == 1`` within 1e-9.
    """

    step: float
    values: np.ndarray
    truncation_mass: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ConfigError("grid density needs a nonempty 1-d value array")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise NonPositiveError("grid step must be positive")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ConfigError("grid density values must be finite and >= 0")
        if not -1e-12 <= self.truncation_mass <= 1.0 + 1e-12:
            raise ConfigError("truncation mass must lie in [0, 1]")
        total = float(vals.sum() * self.step) + self.truncation_mass
        if abs(total - 1.0) > _REL_TOL:
            raise ConfigError(
                f"grid density mass is {total!r}, expected 1 within 1e-9"
            )
        object.__setattr__(self, "values", vals)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.values * self.step

    def mean(self) -> float:
        """Mean of the on-grid mass; the truncated tail is not included."""
        centers = self.step * np.arange(self.values.size)
        return float(np.sum(self.cell_masses * centers))


def _count_cells(x: float, step: float) -> int:
    # number of cell centers strictly below x, with a float-dust guard
    if x <= 0:
        return 0
    return int(math.ceil(x / step - 1e-9))


class ArrivalGrid:
    """Convolution ladder of post-transmission charge distributions.

    Level ``i`` is the distribution of charge after the residual plus ``i``
    further harvesting blocks, stored as exclusive cumulative masses so that
    ``cdf_at(i, x)`` answers ``P{level after i harvests < x}`` directly.
    Levels are filled lazily and shared; filling is locked, so concurrent
    readers are safe.
    """

    def __init__(self, arrival: ArrivalModel, step: float, x_max: float,
                 max_points: int = DEFAULT_MAX_POINTS):
        if not (step > 0 and math.isfinite(step)):
            raise NonPositiveError("grid step must be positive")
        if not (x_max >= 0 and math.isfinite(x_max)):
            raise ConfigError("grid extent must be finite and >= 0")
        n = _count_cells(x_max, step) + 1
        if n > max_points:
            raise GridOverflowError(
                f"grid needs {n} cells for extent {x_max} at step {step}, "
                f"budget is {max_points}"
            )
        self.arrival = arrival
        self.step = step
        self.x_max = x_max
        self.n = n
        self._f = increment_cell_masses(arrival, step, n)
        self._g = excess_cell_masses(arrival, step, n)
        self._kq = 0                 # ladder width, grows with queries
        self._cum: dict[int, np.ndarray] = {}
        self._stride = 1
        self._lock = threading.Lock()

    def _ladder(self, i: int, k: int) -> np.ndarray:
        """Exclusive-cum masses of level ``i`` over at least ``k`` cells.

        Levels are cached truncated to (twice) the widest cell index seen so
        far, which is exact below the cut because mass only moves rightward.
        The cache is pruned to a fixed cell budget by doubling a checkpoint
        stride, so deep scans cannot hold the whole ladder in memory; pruned
        levels are rebuilt from the nearest surviving checkpoint on demand.
        """
        k = min(max(k, 1), self.n)
        with self._lock:
            if k > self._kq:
                self._kq = min(self.n, max(2 * k, 256))
                self._cum = {}
                self._stride = 1
            if not self._cum:
                self._cum[0] = np.cumsum(self._g[: self._kq])
            got = self._cum.get(i)
            if got is None:
                base = max(j for j in self._cum if j <= i)
                masses = np.diff(self._cum[base], prepend=0.0)
                f = self._f[: self._kq]
                for _ in range(i - base):
                    masses = fftconvolve(masses, f)[: self._kq]
                    np.clip(masses, 0.0, None, out=masses)
                got = np.cumsum(masses)
                self._cum[i] = got
                self._prune(i)
            return got

    def _prune(self, tip: int) -> None:
        limit = max(_LADDER_BUDGET_CELLS // max(self._kq, 1), 4)
        while len(self._cum) > limit:
            self._stride *= 2
            self._cum = {j: c for j, c in self._cum.items()
                         if j % self._stride == 0 or j == tip}

    def cdf_at(self, i: int, x: float) -> float:
        """G_i(x) = P{charge after the residual plus i harvests < x}."""
        if i < 0:
            return 1.0
        k = _count_cells(x, self.step)
        if k == 0:
            return 0.0
        if k > self.n:
            raise GridOverflowError(
                f"query at x={x} exceeds the grid extent {self.x_max}"
            )
        return float(self._ladder(i, k)[k - 1])

    def count_pmf(self, target: float, i: int) -> float:
        """P{exactly i harvesting blocks are needed to reach ``target``}."""
        if i < 0:
            return 0.0
        hi = self.cdf_at(i - 1, target)
        lo = self.cdf_at(i, target)
        return max(hi - lo, 0.0)

    def count_pmf_table(self, targets: np.ndarray, i_max: int) -> np.ndarray:
        """Matrix ``T[i, t] = P{E(targets[t]) = i}`` for i = 0..i_max.

        Streams the ladder once without storing levels, truncating work
        arrays at the largest queried target (mass only flows rightward, so
        values below the cut stay exact).
        """
        targets = np.asarray(targets, dtype=float)
        ks = np.array([_count_cells(x, self.step) for x in targets])
        if np.any(ks > self.n):
            raise GridOverflowError("a sweep target exceeds the grid extent")
        out = np.zeros((i_max + 1, targets.size))
        kmax = int(ks.max(initial=0))
        if kmax == 0:
            if i_max >= 0:
                out[0, :] = 1.0
            return out
        f = self._f[:kmax]
        work = self._g[:kmax].copy()
        g_prev = np.ones(targets.size)
        for i in range(i_max + 1):
            cum = np.cumsum(work)
            g_cur = np.where(ks > 0, cum[np.maximum(ks - 1, 0)], 0.0)
            out[i] = np.maximum(g_prev - g_cur, 0.0)
            g_prev = g_cur
            if i < i_max:
                work = fftconvolve(work, f)[:kmax]
                np.clip(work, 0.0, None, out=work)
        return out

    def count_pmf_seq(self, target: float, eps: float,
                      max_len: int = 200_000) -> np.ndarray:
        """pmf of the number of harvests needed to reach ``target``.

        Truncated once the remaining tail drops below ``eps``; the result is
        a dense array starting at count 0.
        """
        k = _count_cells(target, self.step)
        if k == 0:
            return np.array([1.0])
        if k > self.n:
            raise GridOverflowError(
                f"target {target} exceeds the grid extent {self.x_max}"
            )
        f = self._f[:k]
        work = self._g[:k].copy()
        out = []
        g_prev = 1.0
        while True:
            g_cur = float(work.sum())
            out.append(max(g_prev - g_cur, 0.0))
            if g_cur < eps:
                break
            if len(out) >= max_len:
                raise GridOverflowError(
                    f"count pmf for target {target} did not converge within "
                    f"{max_len} terms"
                )
            work = fftconvolve(work, f)[:k]
            np.clip(work, 0.0, None, out=work)
            g_prev = g_cur
        return np.array(out)


_GRIDS: dict[tuple, ArrivalGrid] = {}
_GRIDS_LOCK = threading.Lock()


def default_step(arrival: ArrivalModel) -> float:
    return mean_energy(arrival) / GRID_DIVISOR


def shared_grid(arrival: ArrivalModel, step: float | None, x_need: float,
                max_points: int = DEFAULT_MAX_POINTS) -> ArrivalGrid:
    """Process-wide grid cache; grows (and rebuilds) when a query outruns it."""
    if step is None:
        step = default_step(arrival)
    key = (model_key(arrival), step)
    with _GRIDS_LOCK:
        grid = _GRIDS.get(key)
        if grid is None or grid.x_max < x_need:
            extent = x_need if grid is None else max(x_need, 2.0 * grid.x_max)
            grid = ArrivalGrid(arrival, step, extent, max_points)
            _GRIDS[key] = grid
        return grid


def _quantile(fn, target: float, hi0: float) -> float:
    # smallest x with fn(x) >= target, by doubling plus bisection
    hi = hi0
    for _ in range(200):
        if fn(hi) >= target:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if fn(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def steady_state_pdf(arrival: ArrivalModel, step: float | None = None,
                     x_max: float | None = None) -> GridDensity:
    """Residual-charge density right after a transmission."""
    if step is None:
        step = default_step(arrival)
    if isinstance(arrival, Deterministic):
        return GridDensity(step, np.array([1.0 / step]), 0.0)
    rho = mean_energy(arrival)
    if x_max is None:
        x_max = _quantile(lambda x: float(stationary_excess_cdf(arrival, x)),
                          1.0 - 1e-9, 8.0 * rho)
    n = _count_cells(x_max, step) + 1
    if n > DEFAULT_MAX_POINTS:
        raise GridOverflowError(f"{n} cells exceed the grid budget")
    masses = excess_cell_masses(arrival, step, n)
    trunc = max(1.0 - float(masses.sum()), 0.0)
    return GridDensity(step, masses / step, trunc)


def g_i_density(arrival: ArrivalModel, i: int, step: float | None = None,
                x_max: float | None = None) -> GridDensity:
    """Density of the residual charge plus ``i`` further harvests."""
    if i < 0:
        raise ConfigError("level must be >= 0")
    if step is None:
        step = default_step(arrival)
    if isinstance(arrival, Deterministic):
        idx = int(round(i * arrival.rho / step))
        vals = np.zeros(idx + 1)
        vals[idx] = 1.0 / step
        return GridDensity(step, vals, 0.0)
    rho = mean_energy(arrival)
    if x_max is None:
        q_g = _quantile(lambda x: float(stationary_excess_cdf(arrival, x)),
                        1.0 - 1e-10, 8.0 * rho)
        q_f = _quantile(lambda x: float(cdf(arrival, x)), 1.0 - 1e-10, 8.0 * rho)
        x_max = q_g + i * q_f
    grid = shared_grid(arrival, step, x_max)
    k = _count_cells(x_max, step) + 1
    cum = grid._ladder(i, k)
    masses = np.diff(cum, prepend=0.0)
    masses = np.maximum(masses[:k], 0.0)
    trunc = max(1.0 - float(masses.sum()), 0.0)
    return GridDensity(step, masses / step, trunc)


def big_g(arrival: ArrivalModel, i: int, x: float,
          step: float | None = None) -> float:
    """Probability that the charge is still below ``x`` after the residual
    plus ``i`` harvesting blocks (``i = -1`` means just the point mass at 0,
    hence 1 for any positive ``x``)."""
    if i < 0:
        return 1.0 if x > 0 else 0.0
    if isinstance(arrival, Deterministic):
        return 1.0 if i * arrival.rho < x else 0.0
    grid = shared_grid(arrival, step, max(x, 0.0))
    return grid.cdf_at(i, x)


def deterministic_count(arrival: Deterministic, target: float) -> int:
    """Exact number of blocks needed to harvest ``target``; the target must
    be an integer multiple of the per-block harvest."""
    ratio = target / arrival.rho
    n = round(ratio)
    if not math.isclose(ratio, n, rel_tol=0.0, abs_tol=1e-9 * max(1.0, ratio)):
        raise NonIntegerMultipleError(
            f"target {target} is not an integer multiple of rho={arrival.rho}"
        )
    return int(n)


def eh_count_pmf(arrival: ArrivalModel, target: float, i: int,
                 step: float | None = None) -> float:
    """P{exactly ``i`` harvesting blocks are needed to reach ``target``}."""
    if i < 0:
        return 0.0
    if target <= 0:
        return 1.0 if i == 0 else 0.0
    if isinstance(arrival, Deterministic):
        return 1.0 if i == deterministic_count(arrival, target) else 0.0
    if isinstance(arrival, Exponential):
        # the accumulated-charge process over the residual plus i draws is an
        # (i+1)-stage Erlang, so the count is exactly Poisson
        lam = target / arrival.rho
        return float(np.exp(special.xlogy(i, lam) - lam - special.gammaln(i + 1)))
    grid = shared_grid(arrival, step, target)
    return grid.count_pmf(target, i)


def load_tabulated(path) -> Tabulated:
    """Read a two-column CSV ``energy_uJ,density_per_uJ`` on a uniform grid
    starting at zero."""
    xs: list[float] = []
    vals: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise ConfigError(f"bad table row {row!r}")
            try:
                xs.append(float(row[0]))
                vals.append(float(row[1]))
            except ValueError:
                if not xs:  # tolerate a single header line
                    continue
                raise ConfigError(f"bad table row {row!r}") from None
    if len(xs) < 2:
        raise EmptySamplesError("tabulated density needs at least two rows")
    x = np.asarray(xs)
    if abs(x[0]) > 1e-12:
        raise ConfigError("tabulated grid must start at energy 0")
    steps = np.diff(x)
    step = float(steps[0])
    if step <= 0 or not np.allclose(steps, step, rtol=1e-6, atol=0.0):
        raise ConfigError("tabulated grid must be uniformly spaced")
    return Tabulated(step, np.asarray(vals))
