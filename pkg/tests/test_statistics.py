import math

import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from micromaser import statistics as st
from micromaser.errors import DegenerateChannel, InvalidParams
from micromaser.fockspace import Channel, ChannelSplit, generator_matrix, jump_matrix, no_detection_matrix
from micromaser.settings import DEFAULT_NUMERICS

from conftest import BASE, TRAP


class DenseOracle:
    """Everything from explicit dense inverses and matrix exponentials."""

    def __init__(self, params):
        self.params = params
        self.model = st.MaserModel(params)
        n = self.model.n_max
        self.rho = self.model.rho
        self.x = generator_matrix(params, n).to_dense()
        self.jp = {ch.value: jump_matrix(ChannelSplit(ch, params), n).to_dense() for ch in Channel}
        self.inv = {ch.value: np.linalg.inv(-no_detection_matrix(ChannelSplit(ch, params), n).to_dense())
                    for ch in Channel}

    def frac(self, ch):
        return (self.jp[ch] @ self.rho).sum()

    def seq(self, word):
        v = self.jp[word[0]] @ self.rho
        for letter in word[1:]:
            v = self.jp[letter] @ self.inv["AB"] @ v
        return v.sum() / self.frac("AB")

    def wait(self, a, b):
        # mean first-passage time from an a-detection to the next b-detection, units of 1/r
        return (self.inv[b] @ self.jp[a] @ self.rho).sum() / self.frac(a)

    def fano(self, ch, tau):
        seed = self.jp[ch] @ self.rho / self.frac(ch) - self.rho
        c = self.jp[ch].sum(axis=0)
        f = lambda s: (1 - s / tau) * (c @ expm(self.x * s) @ seed)
        return 2 * quad_vec(f, 0, tau, epsabs=1e-13, epsrel=1e-11)[0]


@pytest.fixture(scope="module")
def oracle():
    return DenseOracle(BASE)


def test_rates_and_inversion(oracle):
    rates = st.detection_rates(BASE)
    assert rates.frac_a == pytest.approx(oracle.frac("A"), rel=1e-12)
    assert rates.r_a == pytest.approx(oracle.frac("A") * BASE.n_ex, rel=1e-12)
    assert rates.p_a + rates.p_b == pytest.approx(1.0)
    inv, inv_t = st.atomic_inversion(BASE)
    assert inv == pytest.approx(oracle.frac("B") - oracle.frac("A"), rel=1e-12)
    assert inv_t == pytest.approx(rates.p_b - rates.p_a, rel=1e-12)


@pytest.mark.parametrize("word", ["A", "B", "AB", "BA", "AAB", "BBA", "ABAB"])
def test_sequences_vs_oracle(oracle, word):
    assert st.sequence_probability(word, BASE).value == pytest.approx(oracle.seq(word), rel=1e-10)


def test_sequence_algebra():
    m = st.MaserModel(BASE)
    probs = {s: st.sequence_probability(s, BASE, model=m).value for n in range(1, 5) for s in st.all_sequences(n)}
    for n in range(1, 5):
        assert sum(probs[s] for s in st.all_sequences(n)) == pytest.approx(1.0, abs=1e-12)
    for s in st.all_sequences(3):
        assert probs[s + "A"] + probs[s + "B"] == pytest.approx(probs[s], abs=1e-12)
    assert probs["AB"] == pytest.approx(probs["BA"], abs=1e-13)


def test_sequence_validation():
    with pytest.raises(InvalidParams):
        st.sequence_probability("AC", BASE)
    with pytest.raises(InvalidParams):
        st.sequence_probability("A" * 9, BASE)


def test_conditional_probabilities_sum_to_one():
    for given in "AB":
        total = sum(st.conditional_probability(given, then, BASE) for then in "AB")
        assert total == pytest.approx(1.0, abs=1e-12)
    assert st.conditional_probability("A", "B", BASE) == pytest.approx(
        st.sequence_probability("AB", BASE).value / st.detection_rates(BASE).p_a, rel=1e-10)


def test_gamma_orderings_and_runs(oracle):
    g1, g2 = st.gamma_orderings(BASE)
    assert g1 == pytest.approx(g2, rel=1e-12)
    assert st.gamma_switch(BASE) == pytest.approx(oracle.seq("AB") * oracle.frac("AB"), rel=1e-10)
    runs = st.mean_successive(BASE)
    n_a, n_b, n_mean, n_norm = runs
    assert n_a == pytest.approx(oracle.frac("A") / g1, rel=1e-10)
    assert n_mean == pytest.approx(0.5 * (n_a + n_b))
    assert n_norm == pytest.approx(n_mean / runs.n_mean_uncor, rel=1e-12)


@pytest.mark.parametrize("a,b", [("A", "A"), ("B", "B"), ("A", "B"), ("B", "A")])
def test_waiting_times_vs_oracle(oracle, a, b):
    rep = st.waiting_time(a, b, BASE)
    assert rep.value == pytest.approx(oracle.wait(a, b) / BASE.n_ex, rel=1e-10)
    if a != b:
        assert rep.meta["alt_route"] == pytest.approx(rep.value, rel=1e-10)


def test_like_waiting_time_is_inverse_rate():
    rates = st.detection_rates(BASE)
    assert st.waiting_time("A", "A", BASE).value * rates.r_a == pytest.approx(1.0, abs=1e-12)
    assert st.waiting_time("B", "B", BASE).value * rates.r_b == pytest.approx(1.0, abs=1e-12)


def test_second_moment_routes(oracle):
    rep = st.waiting_time_squared("A", BASE)
    assert rep.value == pytest.approx(rep.meta["alt_route"], rel=1e-10)
    # 2 tr{X+ (-1/X-)^3 X+ rho} / tr{X+ rho}
    inv = oracle.inv["A"]
    ref = 2 * (oracle.jp["A"] @ inv @ inv @ inv @ oracle.jp["A"] @ oracle.rho).sum() / oracle.frac("A")
    assert rep.value == pytest.approx(ref / BASE.n_ex ** 2, rel=1e-10)


def test_time_unit_conversion():
    inj = BASE.replace(time_unit="atom_injection")
    assert st.waiting_time("A", "B", inj).value == pytest.approx(st.waiting_time("A", "B", BASE).value * 7, rel=1e-12)
    assert st.detection_rates(inj).r_a == pytest.approx(st.detection_rates(BASE).r_a / 7, rel=1e-12)
    assert st.fano_mandel("B", 7.0, inj) == pytest.approx(st.fano_mandel("B", 1.0, BASE), rel=1e-10)


@pytest.mark.parametrize("t", [0.3, 1.0, 4.0])
def test_fano_vs_quadrature(oracle, t):
    tau = BASE.to_internal_time(t)
    assert st.fano_mandel("B", t, BASE) == pytest.approx(oracle.fano("B", tau), rel=1e-7)


def test_fano_limits():
    q = st.fano_mandel_curve("A", [1e-4, 50.0, math.inf], BASE)
    assert abs(q[0]) < 1e-3
    assert q[1] == pytest.approx(q[2], rel=2e-2)
    both = st.fano_mandel_curve("B", [1.0, math.inf], BASE, method="both")
    np.testing.assert_allclose(both, st.fano_mandel_curve("B", [1.0, math.inf], BASE), rtol=1e-7)
    with pytest.raises(InvalidParams):
        st.fano_mandel("AB", 1.0, BASE)
    with pytest.raises(InvalidParams):
        st.fano_mandel("A", 0.0, BASE)


def test_fano_window_average():
    times = np.linspace(1.0, 4.0, 16)
    expected = np.mean(st.fano_mandel_curve("B", times, BASE))
    assert st.fano_mandel_window_average("B", 1.0, 4.0, BASE) == pytest.approx(expected)


def test_time_integration_method_agrees():
    nm = DEFAULT_NUMERICS.replace(method="time_integration")
    for a, b in (("A", "B"), ("B", "B")):
        assert st.waiting_time(a, b, BASE, nm).value == pytest.approx(st.waiting_time(a, b, BASE).value, rel=1e-7)
    assert st.sequence_probability("ABA", BASE, nm).value == pytest.approx(
        st.sequence_probability("ABA", BASE).value, rel=1e-7)


def test_degenerate_channels():
    no_a = BASE.replace(eta_a=0.0)
    with pytest.raises(DegenerateChannel):
        st.waiting_time("A", "B", no_a)
    with pytest.raises(DegenerateChannel):
        st.mean_successive(no_a)
    blind = BASE.replace(eta_a=0.0, eta_b=0.0)
    with pytest.raises(DegenerateChannel):
        st.sequence_probability("A", blind)
    with pytest.raises(DegenerateChannel):
        st.detection_rates(blind).p_a
    with pytest.raises(DegenerateChannel):
        st.atomic_inversion(blind)


def test_weak_detection_decorrelates():
    weak = BASE.replace(eta_a=0.01, eta_b=0.01)
    assert abs(st.mean_successive(weak).n_norm - 1) < abs(st.mean_successive(BASE).n_norm - 1)
    assert abs(st.waiting_time("A", "B", weak).normalized - 1) < 0.01


def test_trapping_angle_runs_longer_a():
    at_trap = BASE.replace(phi=TRAP, eta_a=1.0, eta_b=1.0)
    off = BASE.replace(phi=TRAP - 0.1, eta_a=1.0, eta_b=1.0)
    assert st.mean_successive(at_trap).n_a > st.mean_successive(off).n_a
