"""Update-cycle distribution: closed forms, grid route, identities, limits."""
from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ehdelay import (
    Deterministic,
    Exponential,
    GammaArrival,
    ProtocolParams,
    Tabulated,
    iota_seq,
    success_probability,
    update_cycle_limit,
    update_cycle_mean,
    update_cycle_mean_gen,
    update_cycle_pmf,
    update_cycle_pmf_exp,
    update_cycle_pmf_gen,
    vartheta_seq,
    zeta_seq,
)

P = ProtocolParams(w=50, e_sen=250.0, e_tx=200.0)
EXP = Exponential(50.0)
DET = Deterministic(50.0)
GAM = GammaArrival(0.05, 1000.0)
P_OUT = 0.9002711638118306


# ------------------------------------------------------------- deterministic

def test_det_cycle_perfect_channel():
    # 5 recharge blocks for sense+send (450 uJ at 50 uJ/block, sense spends
    # 250 leaving 200 banked), the sensing block, 4 more recharges folded in,
    # the transmission, one success flag block: 11 in total, always
    c = update_cycle_pmf(P, DET, 0.0)
    assert c.min_support == 11
    assert_allclose(c.probs, [1.0])
    assert c.mean == 11.0
    assert c.tail_mass == 0.0


def test_det_cycle_lattice():
    c = update_cycle_pmf(P, DET, 0.5)
    assert c.prob(11) == pytest.approx(0.5, rel=1e-12)
    assert c.prob(16) == pytest.approx(0.25, rel=1e-12)
    assert c.prob(21) == pytest.approx(0.125, rel=1e-12)
    # within the first window the lattice spacing is 5, so 12..15 are dead
    for k in (12, 13, 14, 15):
        assert c.prob(k) == 0.0
    # a whole failed window costs 56 blocks (recharge for sensing, ten
    # attempts of 5, the drop flag), so the next episode starts at 67
    assert c.prob(67) == pytest.approx(0.5 * 0.5**10, rel=1e-12)


def test_det_cycle_mean_against_double_sum():
    # independent evaluation: a cycle with m whole failed windows and success
    # at attempt n costs 5 + 5n + 1 + 56 m blocks (failed window = recharge
    # for sensing, 10 attempts of 5 blocks, one drop block)
    s = 0.0
    for m in range(0, 4000):
        for n in range(1, 11):
            k = 5 + 5 * n + 1 + m * 56
            s += k * 0.5 * 0.5 ** (n - 1 + 10 * m)
    got = update_cycle_mean(P, DET, 0.5)
    assert got == pytest.approx(s, rel=1e-12)
    assert got == pytest.approx(16.005865102639298, rel=1e-12)
    pmf = update_cycle_pmf(P, DET, 0.5)
    assert pmf.mean == pytest.approx(got, abs=1e-6)


# --------------------------------------------------------------- exponential

def test_exp_cycle_anchors():
    c = update_cycle_pmf(P, EXP, P_OUT)
    assert c.min_support == 2
    assert c.mean == pytest.approx(59.16652336385871, rel=1e-12)
    assert c.tail_mass < 1e-9
    assert update_cycle_mean(P, EXP, P_OUT) == pytest.approx(
        59.166523771721444, rel=1e-12
    )


def test_exp_closed_vs_grid_route():
    closed = update_cycle_pmf_exp(P, 50.0, P_OUT)
    grid = update_cycle_pmf_gen(P, EXP, P_OUT)
    n = min(closed.probs.size, grid.probs.size)
    assert float(np.abs(closed.probs[:n] - grid.probs[:n]).max()) < 2e-3
    # and the grid route must stay internally consistent about its mean
    g_mean = update_cycle_mean_gen(P, EXP, P_OUT)
    assert grid.mean == pytest.approx(g_mean, abs=1e-6)


def test_eps_tail_controls_truncation():
    loose = update_cycle_pmf(P, EXP, P_OUT, eps_tail=1e-6)
    tight = update_cycle_pmf(P, EXP, P_OUT, eps_tail=1e-12)
    assert loose.tail_mass < 1e-6
    assert tight.tail_mass < 1e-12
    assert tight.probs.size > loose.probs.size
    # the two truncations describe the same law within the loose tail budget
    n = loose.probs.size
    assert_allclose(tight.probs[:n], loose.probs, atol=1e-6)


# -------------------------------------------------- building-block sequences

def test_sequence_mass_identities():
    # iota carries the success branch, vartheta the dropped-window branch;
    # together they exhaust the cycle's one unit of probability
    for m in (EXP, GAM):
        p_suc = success_probability(P, m, P_OUT)
        io = iota_seq(P, m, P_OUT)
        th = vartheta_seq(P, m, P_OUT)
        assert float(io.sum()) == pytest.approx(p_suc, abs=1e-12)
        assert float(th.sum()) == pytest.approx(1.0 - p_suc, abs=1e-12)
        assert np.all(io >= 0) and np.all(th >= 0)


def test_zeta_counts_recharges_to_spend_level():
    # deterministic: exactly target/rho blocks, with probability one
    z = zeta_seq(DET, 450.0)
    assert z.size >= 10 and z[9] == pytest.approx(1.0)
    assert float(z.sum()) == pytest.approx(1.0)
    # exponential: mass starts at zero recharges (residual may cover it all)
    z = zeta_seq(EXP, 200.0, eps=1e-12)
    assert z[0] > 0
    assert float(z.sum()) == pytest.approx(1.0, abs=1e-9)


# --------------------------------------------------------------------- gamma

def test_gamma_cycle_anchors():
    c = update_cycle_pmf(P, GAM, P_OUT)
    assert c.min_support == 2
    assert c.tail_mass < 1e-9
    assert c.mean == pytest.approx(57.915349653542386, rel=1e-9)
    assert update_cycle_mean(P, GAM, P_OUT) == pytest.approx(
        57.91535011944239, rel=1e-9
    )
    # pmf-weighted and direct means agree to the truncation level
    assert c.mean == pytest.approx(update_cycle_mean(P, GAM, P_OUT), abs=1e-5)


def test_tabulated_tracks_exponential():
    step = 50.0 / 64.0
    n = 4096
    edges = (np.arange(n + 1) - 0.5) * step
    edges[0] = 0.0
    masses = np.diff(-np.expm1(-edges / 50.0))
    masses[-1] += np.exp(-edges[-1] / 50.0)
    tab = Tabulated(step, masses / step)
    a = update_cycle_pmf(P, tab, P_OUT)
    b = update_cycle_pmf_exp(P, 50.0, P_OUT)
    n = min(a.probs.size, b.probs.size)
    assert float(np.abs(a.probs[:n] - b.probs[:n]).max()) < 1e-3


# ------------------------------------------------------------ pmf invariants

def test_cycle_pmf_invariants():
    # a cycle is at least sense+send back to back; the deterministic model
    # additionally needs its fixed recharge run, so its support starts at 11
    for m, first in ((DET, 11), (EXP, 2), (GAM, 2)):
        c = update_cycle_pmf(P, m, P_OUT)
        assert c.min_support == first
        assert np.all(c.probs >= 0)
        assert float(c.probs.sum()) + c.tail_mass == pytest.approx(1.0, abs=1e-9)
        k = np.arange(c.min_support, c.min_support + c.probs.size)
        assert c.mean == pytest.approx(float(np.dot(k, c.probs)), rel=1e-9)


# -------------------------------------------------------------------- limits

def test_cycle_limit_values():
    assert update_cycle_limit(50.0, 250.0, 200.0, 0.5) == pytest.approx(
        16.0, rel=1e-12
    )
    assert update_cycle_limit(50.0, 250.0, 200.0, P_OUT) == pytest.approx(
        56.13595055462141, rel=1e-12
    )
    # dropping the sensing cost removes exactly e_sen/rho blocks
    assert update_cycle_limit(50.0, 0.0, 200.0, P_OUT) == pytest.approx(
        51.13595055462141, rel=1e-12
    )


def test_cycle_mean_monotone_toward_limit():
    lim = update_cycle_limit(50.0, 250.0, 200.0, P_OUT)
    means = [
        update_cycle_mean(ProtocolParams(w=w, e_sen=250.0, e_tx=200.0), EXP, P_OUT)
        for w in (1, 5, 10, 25, 50, 100, 200)
    ]
    assert all(a > b for a, b in zip(means, means[1:]))
    assert all(m > lim for m in means)
    assert means[-1] == pytest.approx(lim, rel=2e-3)
