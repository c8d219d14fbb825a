"""Detection statistics of the standard micromaser.

Every observable is a trace of the form ``tr{O1 (-1/X-)^k O3 rho_ss}`` or a
time integral along the unconditioned evolution.  Internally time is in units
of ``1/r``; reported times and rates follow ``MaserParams.time_unit``.

Each quantity comes with its *uncorrelated* baseline (independent exponential
arrivals at the steady-state rates) and the ratio of the two.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import CrossCheckMismatch, DegenerateChannel, InvalidParams
from .fockspace import Channel, ChannelSplit, MaserParams, PhotonDistribution, generator_matrix, jump_matrix
from .propagator import (LinearTrajectory, Operator, Resolvent, TraceQuery,
                         resolvent_apply, resolvent_trace)
from .settings import DEFAULT_NUMERICS, Numerics
from .steady import SteadyState, steady_state


class MaserModel:
    """Steady state, channel operators and cached factorizations at one parameter point."""

    def __init__(self, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                 steady: SteadyState | None = None):
        self.params = params
        self.numerics = numerics
        self.steady = steady if steady is not None else steady_state(params, numerics)
        self.n_max = self.steady.n_max
        self.rho = self.steady.weights
        self._jumps = {ch: jump_matrix(ChannelSplit(ch, params), self.n_max) for ch in Channel}
        self._resolvents: dict[Channel, Resolvent] = {}

    def split(self, channel) -> ChannelSplit:
        return ChannelSplit(Channel(channel), self.params)

    def jump(self, channel, v: np.ndarray | None = None) -> np.ndarray:
        return self._jumps[Channel(channel)].matvec(self.rho if v is None else v)

    def jump_fraction(self, channel) -> float:
        """tr{X+ rho_ss}: detections per injected atom."""
        return float(self.jump(channel).sum())

    def resolvent(self, channel) -> Resolvent:
        channel = Channel(channel)
        if channel not in self._resolvents:
            self._resolvents[channel] = Resolvent(self.split(channel), self.n_max)
        return self._resolvents[channel]

    def trace(self, left, channel, power: int, seed: np.ndarray, method: str | None = None) -> float:
        """tr{left (-1/X-_channel)^power seed}."""
        method = method or self.numerics.method
        direct_res = self.resolvent(channel) if method != "time_integration" else None
        q = TraceQuery(Operator(left), self.split(channel), power, PhotonDistribution(seed), method)
        return resolvent_trace(q, self.numerics, resolvent=direct_res)

    def apply_resolvent(self, channel, v: np.ndarray, power: int = 1, method: str | None = None) -> np.ndarray:
        method = method or self.numerics.method
        direct_res = self.resolvent(channel) if method != "time_integration" else None
        return resolvent_apply(self.split(channel), v, power, method, self.numerics, resolvent=direct_res)

    def provenance(self) -> dict:
        nm = self.numerics
        return {"n_max": self.n_max, "method": nm.method, "ode_rtol": nm.ode_rtol,
                "fixed_step": nm.fixed_step, "ss_residual": self.steady.residual}


@functools.lru_cache(maxsize=64)
def _cached_model(params: MaserParams, numerics: Numerics) -> MaserModel:
    return MaserModel(params, numerics)


def model_for(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS) -> MaserModel:
    return _cached_model(params, numerics)


def _model(params, numerics, model):
    return model if model is not None else model_for(params, numerics)


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StatReport:
    name: str
    value: float
    uncorrelated: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def normalized(self) -> float:
        return self.value / self.uncorrelated if self.uncorrelated != 0 else math.nan


@dataclass(frozen=True)
class RatePair:
    """Steady-state detection rates.  ``frac_*`` are per injected atom (units of r)."""

    frac_a: float
    frac_b: float
    unit_scale: float  # rate in the reporting unit = frac * unit_scale

    @property
    def r_a(self) -> float:
        return self.frac_a * self.unit_scale

    @property
    def r_b(self) -> float:
        return self.frac_b * self.unit_scale

    @property
    def p_a(self) -> float:
        total = self.frac_a + self.frac_b
        if total == 0:
            raise DegenerateChannel("no detections: P[A] undefined")
        return self.frac_a / total

    @property
    def p_b(self) -> float:
        total = self.frac_a + self.frac_b
        if total == 0:
            raise DegenerateChannel("no detections: P[B] undefined")
        return self.frac_b / total


@dataclass(frozen=True)
class SequenceProb:
    sequence: str
    value: float


@dataclass(frozen=True)
class SuccessiveDetections:
    n_a: float
    n_b: float
    n_mean: float
    n_norm: float
    n_a_uncor: float
    n_b_uncor: float
    n_mean_uncor: float

    def __iter__(self):
        return iter((self.n_a, self.n_b, self.n_mean, self.n_norm))

    @property
    def n_a_norm(self) -> float:
        return self.n_a / self.n_a_uncor

    @property
    def n_b_norm(self) -> float:
        return self.n_b / self.n_b_uncor


# ---------------------------------------------------------------------------
# rates, inversion, switching
# ---------------------------------------------------------------------------

def detection_rates(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                    model: MaserModel | None = None) -> RatePair:
    m = _model(params, numerics, model)
    unit = params.n_ex if params.time_unit == "cavity_decay" else 1.0
    return RatePair(m.jump_fraction(Channel.A), m.jump_fraction(Channel.B), unit)


def atomic_inversion(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                     model: MaserModel | None = None) -> tuple[float, float]:
    """(I, I~): inversion per injected atom and per detected atom."""
    rates = detection_rates(params, numerics, model)
    inv = rates.frac_b - rates.frac_a
    total = rates.frac_a + rates.frac_b
    if total == 0:
        raise DegenerateChannel("no detections: per-detection inversion undefined")
    return inv, inv / total


def gamma_orderings(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                    model: MaserModel | None = None, method: str | None = None) -> tuple[float, float]:
    """Switch parameter in both operator orderings: (A after B, B after A)."""
    m = _model(params, numerics, model)
    g_ab = m.trace(Operator.JUMP_A, Channel.AB, 1, m.jump(Channel.B), method)
    g_ba = m.trace(Operator.JUMP_B, Channel.AB, 1, m.jump(Channel.A), method)
    return g_ab, g_ba


def gamma_switch(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                 model: MaserModel | None = None, method: str | None = None) -> float:
    g_ab, g_ba = gamma_orderings(params, numerics, model, method)
    return 0.5 * (g_ab + g_ba)


# ---------------------------------------------------------------------------
# sequences and runs
# ---------------------------------------------------------------------------

def sequence_probability(seq: str, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                         model: MaserModel | None = None, method: str | None = None) -> SequenceProb:
    """Probability that successive detections realize ``seq`` (first letter first)."""
    if not seq or set(seq) - {"A", "B"}:
        raise InvalidParams(f"sequence must be a nonempty string over 'A'/'B', got {seq!r}")
    if len(seq) > numerics.max_sequence_length:
        raise InvalidParams(f"sequence longer than {numerics.max_sequence_length}")
    m = _model(params, numerics, model)
    norm = m.jump_fraction(Channel.AB)
    if norm == 0:
        raise DegenerateChannel("no detections: sequence probabilities undefined")
    v = m.jump(seq[0])
    for letter in seq[1:]:
        v = m.jump(letter, m.apply_resolvent(Channel.AB, v, 1, method))
    return SequenceProb(seq, float(v.sum()) / norm)


def all_sequences(length: int) -> list[str]:
    return ["".join(s) for s in itertools.product("AB", repeat=length)]


def conditional_probability(given: str, then: str, params: MaserParams,
                            numerics: Numerics = DEFAULT_NUMERICS, model: MaserModel | None = None) -> float:
    """P[given_then]: probability of the next detection being ``then`` after a ``given`` detection."""
    m = _model(params, numerics, model)
    frac = m.jump_fraction(given)
    if frac == 0:
        raise DegenerateChannel(f"no {given} detections")
    seed = m.jump(given) / frac
    return m.trace(Operator(f"jump_{then}"), Channel.AB, 1, seed)


def mean_successive(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                    model: MaserModel | None = None) -> SuccessiveDetections:
    m = _model(params, numerics, model)
    gamma = gamma_switch(params, numerics, m)
    if gamma <= 0:
        raise DegenerateChannel("switch probability is zero: runs never end")
    fa, fb = m.jump_fraction(Channel.A), m.jump_fraction(Channel.B)
    if fa == 0 or fb == 0:
        raise DegenerateChannel("one detection type never occurs")
    pa, pb = fa / (fa + fb), fb / (fa + fb)
    n_a, n_b = fa / gamma, fb / gamma
    n_mean = 0.5 * (n_a + n_b)
    return SuccessiveDetections(
        n_a=n_a, n_b=n_b, n_mean=n_mean, n_norm=fa * fb / ((fa + fb) * gamma),
        n_a_uncor=1.0 / pb, n_b_uncor=1.0 / pa, n_mean_uncor=1.0 / (2.0 * pa * pb))


# ---------------------------------------------------------------------------
# waiting times
# ---------------------------------------------------------------------------

def _other(channel: str) -> str:
    return "B" if channel == "A" else "A"


def waiting_time(start: str, target: str, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                 model: MaserModel | None = None, method: str | None = None) -> StatReport:
    """Mean time from a ``start`` detection to the next ``target`` detection.

    Like-state times use the second-power resolvent route, so the returned
    value checks (rather than assumes) the identity t_{A->A} r_A = 1.
    Unlike-state times use the first-power route; the second-power route is
    reported in ``meta['alt_route']``.
    """
    m = _model(params, numerics, model)
    f_start, f_target = m.jump_fraction(start), m.jump_fraction(target)
    if f_start == 0 or f_target == 0:
        zero = start if f_start == 0 else target
        raise DegenerateChannel(f"rate of {zero} detections is zero")
    seed = m.jump(start)
    left = Operator(f"jump_{target}")
    tscale = params.time_scale
    if start == target:
        value = m.trace(left, target, 2, seed, method) / f_start
        alt = None
    else:
        value = m.trace(Operator.TRACE, target, 1, seed, method) / f_start
        alt = m.trace(left, target, 2, seed, method) / f_start * tscale
    meta = {**m.provenance(), "alt_route": alt}
    return StatReport(f"t_{start}{target}", value * tscale, tscale / f_target, meta)


def waiting_time_squared(channel: str, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                         model: MaserModel | None = None, method: str | None = None) -> StatReport:
    """Mean squared time between like detections via the third-power resolvent.

    The reduced form ``2/(r r_A) tr{-1/X- rho_ss}`` is stored in ``meta['alt_route']``.
    """
    m = _model(params, numerics, model)
    frac = m.jump_fraction(channel)
    if frac == 0:
        raise DegenerateChannel(f"rate of {channel} detections is zero")
    tscale2 = params.time_scale ** 2
    value = 2.0 * m.trace(Operator(f"jump_{channel}"), channel, 3, m.jump(channel), method) / frac
    alt = 2.0 * m.trace(Operator.TRACE, channel, 1, m.rho, method) / frac
    meta = {**m.provenance(), "alt_route": alt * tscale2}
    return StatReport(f"t2_{channel}{channel}", value * tscale2, 2.0 * tscale2 / frac ** 2, meta)


def waiting_times(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                  model: MaserModel | None = None, method: str | None = None) -> dict[str, StatReport]:
    m = _model(params, numerics, model)
    out = {}
    for a, b in (("A", "A"), ("B", "B"), ("A", "B"), ("B", "A")):
        rep = waiting_time(a, b, params, numerics, m, method)
        out[rep.name] = rep
    for ch in ("A", "B"):
        rep = waiting_time_squared(ch, params, numerics, m, method)
        out[rep.name] = rep
    return out


# ---------------------------------------------------------------------------
# Fano-Mandel counting statistics
# ---------------------------------------------------------------------------

def _fano_seed(m: MaserModel, channel: str) -> tuple[np.ndarray, np.ndarray]:
    channel = Channel(channel)
    if channel is Channel.AB:
        raise InvalidParams("Fano-Mandel functions are defined for channel A or B")
    frac = m.jump_fraction(channel)
    if frac == 0:
        raise DegenerateChannel(f"no {channel.value} detections")
    seed = m.jump(channel) / frac - m.rho
    return seed, m._jumps[channel].column_sums()


def _fano_direct(m: MaserModel, seed, c, tau: float) -> float:
    gen = generator_matrix(m.params, m.n_max).to_dense()
    n = m.n_max + 1
    if math.isinf(tau):
        # int_0^inf exp(X s) seed ds on the traceless subspace
        k = np.zeros((n + 1, n + 1))
        k[:n, :n] = gen
        k[:n, n] = m.rho
        k[n, :n] = 1.0
        y = np.linalg.solve(k, np.concatenate([-seed, [0.0]]))[:n]
        return 2.0 * float(c @ y)
    # int_0^tau (tau - s) exp(X s) seed ds from one augmented matrix exponential
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = gen
    aug[:n, n] = seed
    aug[n, n + 1] = 1.0
    col = expm(aug * tau)[:n, n + 1]
    return 2.0 * float(c @ col) / tau


def fano_mandel_curve(channel: str, times, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                      model: MaserModel | None = None, method: str | None = None) -> np.ndarray:
    """Q(t) for each observation time (reporting units; ``math.inf`` allowed)."""
    m = _model(params, numerics, model)
    method = method or numerics.method
    seed, c = _fano_seed(m, channel)
    taus = [params.to_internal_time(t) if math.isfinite(t) else math.inf for t in times]
    if any(t <= 0 for t in taus):
        raise InvalidParams("observation time must be positive")
    direct = timed = None
    if method in ("direct_solve", "both"):
        direct = np.array([_fano_direct(m, seed, c, tau) for tau in taus])
    if method in ("time_integration", "both"):
        gen = generator_matrix(params, m.n_max)
        timed = np.empty(len(taus))
        finite = sorted((tau, i) for i, tau in enumerate(taus) if math.isfinite(tau))
        if finite:
            traj = LinearTrajectory(gen, seed, numerics, functional=c, powers=(0, 1))
            for tau, i in finite:
                j0, j1 = traj.advance_to(tau).acc
                timed[i] = 2.0 * (j0 - j1 / tau)
        for i, tau in enumerate(taus):
            if math.isinf(tau):
                traj = LinearTrajectory(gen, seed, numerics, functional=c, powers=(0,))
                traj.integrate_to_infinity()
                timed[i] = 2.0 * traj.acc[0]
    if method == "direct_solve":
        return direct
    if method == "time_integration":
        return timed
    scale = max(np.max(np.abs(direct)), 1e-300)
    gap = float(np.max(np.abs(timed - direct)) / scale)
    if gap > numerics.crosscheck_rtol:
        raise CrossCheckMismatch(f"Fano-Mandel routes disagree by {gap:.2e} (relative)")
    return timed


def fano_mandel(channel: str, t: float, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                model: MaserModel | None = None, method: str | None = None) -> float:
    """Q_channel(t); ``t`` in reporting units, ``math.inf`` for the long-time limit."""
    return float(fano_mandel_curve(channel, [t], params, numerics, model, method)[0])


def fano_mandel_window_average(channel: str, t_lo: float, t_hi: float, params: MaserParams,
                               points: int = 16, numerics: Numerics = DEFAULT_NUMERICS,
                               model: MaserModel | None = None) -> float:
    """Uniform average of Q(t) over ``points`` equally spaced times in [t_lo, t_hi]."""
    times = np.linspace(t_lo, t_hi, points)
    return float(np.mean(fano_mandel_curve(channel, times, params, numerics, model)))
