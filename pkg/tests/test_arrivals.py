"""Increment laws, the post-transmission residual law and block counting."""
from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from ehdelay import (
    ConfigError,
    Deterministic,
    EmptySamplesError,
    Exponential,
    GammaArrival,
    GridOverflowError,
    Tabulated,
    big_g,
    eh_count_pmf,
    load_tabulated,
)
from ehdelay.arrivals import (
    cdf,
    default_step,
    excess_cell_masses,
    increment_cell_masses,
    mean_energy,
    stationary_excess_cdf,
)

EXP = Exponential(50.0)
DET = Deterministic(50.0)
GAM = GammaArrival(0.05, 1000.0)


# ---------------------------------------------------------------- increments

def test_cdf_spot_values():
    assert cdf(DET, 49.999) == 0.0
    assert cdf(DET, 50.0) == 1.0
    assert float(cdf(EXP, 75.0)) == pytest.approx(-np.expm1(-1.5), rel=1e-14)
    assert float(cdf(GAM, 37.0)) == pytest.approx(
        stats.gamma.cdf(37.0, 0.05, scale=1000.0), rel=1e-12
    )


def test_cdf_vectorized_monotone():
    x = np.linspace(0.0, 500.0, 257)
    for m in (EXP, GAM):
        c = np.asarray(cdf(m, x))
        assert c.shape == x.shape
        assert np.all(np.diff(c) >= 0)
        assert c[0] == pytest.approx(0.0, abs=1e-12)


# ------------------------------------------------------- residual-charge law

def test_excess_exponential_is_itself():
    # memoryless increments leave a memoryless residual
    x = np.linspace(0.0, 400.0, 101)
    assert_allclose(
        np.asarray(stationary_excess_cdf(EXP, x)), np.asarray(cdf(EXP, x)),
        atol=1e-13,
    )


def test_excess_gamma_against_quadrature_free_form():
    # int_0^x S(u) du / rho evaluated through the gamma cdf of shape+1
    x = 37.0
    num = (
        stats.gamma.cdf(x, 0.05 + 1.0, scale=1000.0) * 0.05 * 1000.0
        + x * stats.gamma.sf(x, 0.05, scale=1000.0)
    )
    assert float(stationary_excess_cdf(GAM, x)) == pytest.approx(
        num / 50.0, rel=1e-12
    )


def test_excess_deterministic_is_point_mass_at_zero():
    # on-lattice spending leaves an exactly empty fractional residual
    assert float(stationary_excess_cdf(DET, 0.0)) == 1.0
    assert float(stationary_excess_cdf(DET, 25.0)) == 1.0
    assert float(stationary_excess_cdf(DET, -1.0)) == 0.0


def test_excess_cell_masses_sum_to_cdf():
    step = default_step(EXP)
    n = 2048
    m = excess_cell_masses(EXP, step, n)
    top = (n - 0.5) * step
    assert float(m.sum()) == pytest.approx(
        float(stationary_excess_cdf(EXP, top)), rel=1e-12
    )
    inc = increment_cell_masses(GAM, step, n)
    assert np.all(inc >= 0)
    assert float(inc.sum()) <= 1.0 + 1e-12


# ------------------------------------------------------------- block counts

def test_count_exponential_matches_poisson():
    # fresh-start counting over an exponential battery is exactly Poisson
    ks = np.arange(0, 30)
    mine = np.array([eh_count_pmf(EXP, 200.0, int(k)) for k in ks])
    assert_allclose(mine, stats.poisson.pmf(ks, 4.0), atol=1e-12)


def test_count_deterministic_is_degenerate():
    # exactly ceil(target/rho) blocks are needed, minus the residual credit
    assert eh_count_pmf(DET, 200.0, 4) == pytest.approx(1.0)
    assert eh_count_pmf(DET, 200.0, 3) == 0.0
    assert eh_count_pmf(DET, 200.0, 5) == 0.0


def test_count_normalizes_over_i():
    for m in (EXP, GAM):
        total = sum(eh_count_pmf(m, 450.0, i) for i in range(0, 4000))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_big_g_monotone():
    # more arrivals can only push the accumulated energy higher
    g = [big_g(GAM, i, 450.0) for i in range(0, 12)]
    assert all(a >= b - 1e-15 for a, b in zip(g, g[1:]))
    # and the cdf in x must be nondecreasing
    xs = [100.0, 200.0, 400.0, 800.0]
    gx = [big_g(GAM, 3, x) for x in xs]
    assert gx == sorted(gx)


def test_grid_overflow_guard():
    with pytest.raises(GridOverflowError):
        # absurdly fine grid on a heavy target forces the size guard
        big_g(GAM, 5, 450.0, step=1e-7)


# ---------------------------------------------------------------- tabulated

def _exp_table(step: float, n: int) -> Tabulated:
    edges = (np.arange(n + 1) - 0.5) * step
    edges[0] = 0.0
    masses = np.diff(-np.expm1(-edges / 50.0))
    masses[-1] += np.exp(-edges[-1] / 50.0)  # fold far tail into last cell
    return Tabulated(step, masses / step)


def test_tabulated_mean_tracks_target():
    t = _exp_table(50.0 / 64.0, 4096)
    assert mean_energy(t) == pytest.approx(50.0, rel=1e-4)


def test_tabulated_counting_close_to_exponential():
    t = _exp_table(50.0 / 64.0, 4096)
    ks = np.arange(0, 25)
    mine = np.array([eh_count_pmf(t, 200.0, int(k)) for k in ks])
    assert_allclose(mine, stats.poisson.pmf(ks, 4.0), atol=5e-4)


def test_load_tabulated_roundtrip(tmp_path):
    t = _exp_table(1.0, 512)
    path = tmp_path / "table.csv"
    rows = ["energy_uJ,density_per_uJ"]
    rows += [f"{i * t.step},{float(v)!r}" for i, v in enumerate(t.values)]
    path.write_text("\n".join(rows) + "\n")
    back = load_tabulated(path)
    assert back.step == pytest.approx(t.step)
    assert_allclose(back.values, t.values, rtol=1e-12)


@pytest.mark.parametrize(
    "text",
    [
        "energy_uJ,density_per_uJ\n0.0,1.0\n",               # single row
        "0.0,0.5\n2.0,0.5\n3.0,0.0\n",                        # uneven grid
        "5.0,0.5\n6.0,0.5\n",                                 # not from zero
        "0.0,0.5\nnot,a,number\n1.0,0.5\n",                   # bad row
    ],
)
def test_load_tabulated_rejects(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises((ConfigError, EmptySamplesError)):
        load_tabulated(path)
