"""Closed-form identities and limiting cases of the detection statistics."""
import math

import numpy as np
import pytest

from micromaser import statistics as st
from micromaser.fockspace import (Channel, ChannelSplit, MaserParams, PhotonDistribution, apply_damping,
                                  apply_jump, apply_no_detection, apply_pass_deexcited,
                                  apply_pass_excited)
from micromaser.propagator import evolve_no_detection, propagate_unconditioned
from micromaser.steady import steady_state
from micromaser.trajectory import UNDETECTED, simulate

NU = 0.054
PHIS = (0.5, 1.0, math.pi / math.sqrt(2.0), 3.0, 6.5)


@pytest.mark.parametrize("phi", PHIS)
def test_mean_run_length_from_pair_probability(phi):
    params = MaserParams(7.0, NU, phi, 0.4, 0.4)
    m = st.MaserModel(params)
    runs = st.mean_successive(params, model=m)
    p_ab = st.sequence_probability("AB", params, model=m).value
    assert runs.n_mean == pytest.approx(1.0 / (2.0 * p_ab), rel=1e-9)


@pytest.mark.parametrize("phi", PHIS)
def test_perfect_detection_inversions_coincide(phi):
    params = MaserParams(7.0, NU, phi, 1.0, 1.0, time_unit="atom_injection")
    ss = steady_state(params)
    inv, inv_tilde = st.atomic_inversion(params)
    b_minus_a = apply_pass_deexcited(ss.weights, params).total - apply_pass_excited(ss.weights, params).total
    assert inv == pytest.approx(inv_tilde, abs=1e-12)
    assert inv == pytest.approx(b_minus_a, abs=1e-12)
    rates = st.detection_rates(params)
    assert rates.r_a + rates.r_b == pytest.approx(1.0, abs=1e-12)


def test_zero_angle_limits():
    params = MaserParams(7.0, NU, 0.0, 0.4, 0.7)
    inv, inv_tilde = st.atomic_inversion(params)
    assert inv == pytest.approx(-0.4, abs=1e-12)
    assert inv_tilde == pytest.approx(-1.0, abs=1e-12)
    assert st.detection_rates(params.replace(nu=0.0)).r_b == 0.0


def test_no_detection_trace_loss_equals_detection_rate():
    params = MaserParams(7.0, NU, math.pi / 2, 1.0, 1.0, time_unit="atom_injection")
    ss = steady_state(params)
    loss = apply_no_detection(ChannelSplit(Channel.AB, params), ss.weights).total
    rates = st.detection_rates(params)
    assert loss == pytest.approx(-(rates.r_a + rates.r_b), abs=1e-12)


@pytest.mark.parametrize("phi", PHIS)
def test_symmetric_efficiency_run_normalizations_agree(phi):
    params = MaserParams(7.0, NU, phi, 0.4, 0.4)
    runs = st.mean_successive(params)
    assert runs.n_a_norm == pytest.approx(runs.n_norm, rel=1e-9)
    assert runs.n_b_norm == pytest.approx(runs.n_norm, rel=1e-9)


@pytest.mark.parametrize("phi", (1.0, 3.0))
def test_normalized_observables_approach_one_monotonically(phi):
    devs = []
    for eta in (0.4, 0.1, 0.01):
        params = MaserParams(7.0, NU, phi, eta, eta)
        devs.append((abs(st.mean_successive(params).n_norm - 1.0),
                     abs(st.waiting_time("A", "B", params).normalized - 1.0)))
    for column in zip(*devs):
        assert column[0] > column[1] > column[2]


def test_pair_waiting_normalization_matches_definition():
    params = MaserParams(7.0, NU, 1.0, 0.4, 0.4)
    rep = st.waiting_time("A", "B", params)
    rates = st.detection_rates(params)
    assert rep.uncorrelated == pytest.approx(1.0 / rates.r_b, rel=1e-12)
    assert rep.normalized == pytest.approx(rep.value * rates.r_b, rel=1e-12)


def test_lower_level_seed_is_traceless_after_subtraction():
    params = MaserParams(7.0, NU, 1.0, 0.4, 0.4)
    m = st.MaserModel(params)
    seed = m.jump("B") / m.jump("B").sum() - m.steady.weights
    assert abs(seed.sum()) < 1e-14


def test_unconditioned_evolution_semigroup():
    params = MaserParams(7.0, NU, 1.0)
    p0 = PhotonDistribution.fock(3, 60)
    once = propagate_unconditioned(p0, 0.7, params).weights
    twice = propagate_unconditioned(propagate_unconditioned(p0, 0.3, params), 0.4, params).weights
    assert np.abs(once - twice).sum() < 1e-8
    assert once.sum() == pytest.approx(1.0, abs=1e-10)


def test_unconditioned_evolution_relaxes_to_steady_state():
    params = MaserParams(7.0, NU, 1.0)
    ss = steady_state(params)
    p0 = PhotonDistribution.fock(0, ss.n_max)
    late = propagate_unconditioned(p0, 400.0, params).weights
    assert np.abs(late - ss.weights).sum() < 1e-7


def test_blind_channel_leaves_steady_state_invariant():
    params = MaserParams(7.0, NU, 1.0, 0.0, 0.0)
    ss = steady_state(params)
    res = evolve_no_detection(ChannelSplit(Channel.AB, params), PhotonDistribution(ss.weights), 25.0)
    assert np.abs(res.final.weights - ss.weights).sum() < 1e-9
    assert res.u_final == pytest.approx(1.0, abs=1e-10)


def test_damping_of_single_photon():
    params = MaserParams(7.0, 0.0, 1.0)
    out = apply_damping(PhotonDistribution.fock(1, 5), params).weights
    assert out[:2] == pytest.approx([1 / 7, -1 / 7], abs=1e-15)
    assert np.all(out[2:] == 0)


def test_quarter_turn_vacuum_passage():
    params = MaserParams(7.0, NU, math.pi / 2, 1.0, 0.4)
    vac = PhotonDistribution.fock(0, 5)
    assert apply_pass_deexcited(vac, params).weights[1] == pytest.approx(1.0, abs=1e-15)
    jump = apply_jump(ChannelSplit(Channel.B, params), vac).weights
    assert jump[1] == pytest.approx(0.4, abs=1e-15)


def test_jump_map_linear_and_positive():
    rng = np.random.default_rng(3)
    params = MaserParams(7.0, NU, 2.3, 0.6, 0.3)
    split = ChannelSplit(Channel.AB, params)
    x, y = rng.random(40), rng.random(40)
    x[-5:] = y[-5:] = 0.0
    a, b = 0.7, -1.9
    lhs = apply_jump(split, a * x + b * y).weights
    rhs = a * apply_jump(split, x).weights + b * apply_jump(split, y).weights
    assert np.allclose(lhs, rhs, atol=1e-14)
    assert np.all(apply_jump(split, x).weights >= 0)


@pytest.mark.parametrize("eta", (1.0, 0.4))
def test_exclusion_probability_matches_simulation(eta):
    params = MaserParams(7.0, NU, 1.0, eta, eta, time_unit="atom_injection")
    ss = steady_state(params)
    duration = 1.0
    u = evolve_no_detection(ChannelSplit(Channel.AB, params), PhotonDistribution(ss.weights), duration).u_final

    if eta == 1.0:
        assert u == pytest.approx(math.exp(-duration), rel=1e-9)   # every atom is seen

    # windows spaced well beyond the cavity memory, so counts are close to independent
    rec = simulate(params, 400_000, seed=77)
    det = rec.times[rec.outcomes != UNDETECTED]
    starts = np.arange(rec.times[0], rec.times[-1] - duration, 20.0)
    nxt = np.searchsorted(det, starts)
    empty = (nxt >= det.size) | (det[np.minimum(nxt, det.size - 1)] >= starts + duration)
    freq = empty.mean()
    se = math.sqrt(freq * (1 - freq) / starts.size)
    assert abs(freq - u) <= 3 * se + 1e-12
