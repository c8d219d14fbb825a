import math

import numpy as np
import pytest
from scipy.linalg import expm

from micromaser.errors import CrossCheckMismatch, InvalidParams, SingularResolvent
from micromaser.fockspace import (Channel, ChannelSplit, PhotonDistribution, generator_matrix,
                                  jump_matrix, no_detection_matrix)
from micromaser.propagator import (DormandPrince, FixedStepRK4, LinearTrajectory, Operator, Resolvent,
                                   TraceQuery, evolve_no_detection,
                                   propagate_unconditioned, resolvent_apply, resolvent_trace,
                                   trajectory_integrals)
from micromaser.settings import DEFAULT_NUMERICS, Numerics
from micromaser.steady import steady_state

from conftest import BASE, random_state

N_MAX = 40


def test_dormand_prince_scalar_exponential():
    dp = DormandPrince(lambda t, y: -2.0 * y, 0.0, np.array([1.0]), rtol=1e-10, atol=1e-14)
    assert dp.advance_to(3.0)[0] == pytest.approx(math.exp(-6.0), rel=1e-8)
    rk = FixedStepRK4(lambda t, y: -2.0 * y, 0.0, np.array([1.0]), step=1e-3)
    assert rk.advance_to(3.0)[0] == pytest.approx(math.exp(-6.0), rel=1e-10)


def test_compiled_kernel_matches_python_reference():
    gen = generator_matrix(BASE, N_MAX)
    seed = random_state(N_MAX, 1)
    traj = LinearTrajectory(gen, seed, DEFAULT_NUMERICS, functional=np.arange(N_MAX + 1.0), powers=(0, 1))
    traj.advance_to(2.5)
    ref = DormandPrince(traj.rhs, 0.0, np.concatenate([seed, [0.0, 0.0]]), rtol=1e-11, atol=1e-16)
    np.testing.assert_allclose(traj.z, ref.advance_to(2.5), rtol=1e-8, atol=1e-13)


@pytest.mark.parametrize("fixed_step", [0.0, 0.02])
def test_evolution_matches_expm(fixed_step):
    numerics = DEFAULT_NUMERICS.replace(fixed_step=fixed_step)
    p0 = PhotonDistribution(random_state(N_MAX, 2))
    exact = expm(generator_matrix(BASE, N_MAX).to_dense() * 3.0) @ p0.weights
    got = propagate_unconditioned(p0, 3.0, BASE, numerics=numerics).weights
    np.testing.assert_allclose(got, exact, atol=1e-9)
    split = ChannelSplit(Channel.AB, BASE)
    res = evolve_no_detection(split, p0, 3.0, numerics=numerics)
    exact_u = (expm(no_detection_matrix(split, N_MAX).to_dense() * 3.0) @ p0.weights).sum()
    assert res.u_final == pytest.approx(exact_u, rel=1e-8)


def test_exclusion_probability_monotone():
    split = ChannelSplit(Channel.B, BASE)
    p0 = PhotonDistribution(random_state(N_MAX, 4))
    res = evolve_no_detection(split, p0, 20.0)
    assert 0 < res.u_final < 1
    assert res.max_u_increase <= 1e-12
    with pytest.raises(InvalidParams):
        evolve_no_detection(split, p0, -1.0)


def test_trajectory_integrals_time_moments():
    split = ChannelSplit(Channel.A, BASE)
    gen = no_detection_matrix(split, N_MAX)
    seed = random_state(N_MAX, 5)
    c = np.ones(N_MAX + 1)
    ti = trajectory_integrals(gen, seed, c, powers=(0, 1, 2))
    res = Resolvent(split, N_MAX)
    for k, value in enumerate(ti.values):
        assert value == pytest.approx(c @ res.apply(seed, k + 1), rel=1e-8)


@pytest.mark.parametrize("channel", list(Channel))
@pytest.mark.parametrize("power", [1, 2, 3])
def test_resolvent_inverts_generator(channel, power):
    split = ChannelSplit(channel, BASE)
    res = Resolvent(split, N_MAX)
    v = random_state(N_MAX, 6)
    x = res.apply(v, power)
    neg = -no_detection_matrix(split, N_MAX).to_dense()
    np.testing.assert_allclose(np.linalg.matrix_power(neg, power) @ x, v, atol=1e-12)


def test_blind_channel_is_singular():
    blind = BASE.replace(eta_a=0.0, eta_b=0.0)
    with pytest.raises(SingularResolvent):
        Resolvent(ChannelSplit(Channel.AB, blind), N_MAX)
    q = TraceQuery(Operator.TRACE, ChannelSplit(Channel.A, blind), 1,
                   PhotonDistribution(random_state(N_MAX)), method="time_integration")
    with pytest.raises(SingularResolvent):
        resolvent_trace(q)


@pytest.mark.parametrize("eta", [1.0, 0.4, 0.01])
def test_waiting_time_identity_trace(eta):
    # tr{X+_A (X-_A)^-2 X+_A rho} = 1 for the unnormalized seed X+_A rho
    params = BASE.replace(eta_a=eta, eta_b=eta)
    ss = steady_state(params)
    split = ChannelSplit(Channel.A, params)
    seed = jump_matrix(split, ss.n_max).matvec(ss.weights)
    q = TraceQuery(Operator.JUMP_A, split, 2, PhotonDistribution(seed), method="both")
    assert resolvent_trace(q) == pytest.approx(1.0, rel=1e-10)


def test_crosscheck_mismatch_raised():
    split = ChannelSplit(Channel.B, BASE)
    q = TraceQuery(Operator.JUMP_B, split, 1, PhotonDistribution(random_state(N_MAX, 8)), method="both")
    loose = Numerics(ode_rtol=1e-3, crosscheck_rtol=1e-14)
    with pytest.raises(CrossCheckMismatch):
        resolvent_trace(q, loose)


def test_trace_query_validation():
    split = ChannelSplit(Channel.A, BASE)
    seed = PhotonDistribution(random_state(N_MAX))
    with pytest.raises(InvalidParams):
        TraceQuery(Operator.TRACE, split, 4, seed)
    with pytest.raises(InvalidParams):
        TraceQuery(Operator.TRACE, split, 1, seed, method="guess")


def test_vector_resolvent_routes_agree():
    split = ChannelSplit(Channel.AB, BASE)
    v = random_state(N_MAX, 9)
    a = resolvent_apply(split, v, 2, method="direct_solve")
    b = resolvent_apply(split, v, 2, method="time_integration")
    np.testing.assert_allclose(a, b, rtol=1e-7, atol=1e-14)
