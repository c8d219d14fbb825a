"""Linear no-detection evolution, exclusion probabilities and resolvent traces.

Traces ``tr{O1 (-1/X-)^k seed}`` are evaluated two independent ways:

* ``time_integration``: integrate ``d rho/dt = X- rho`` from ``rho(0) = seed`` and
  accumulate ``int_0^inf t^(k-1)/(k-1)! tr{O1 rho(t)} dt`` alongside the state,
  extending the horizon by doubling until the integral stops changing;
* ``direct_solve``: ``k`` successive tridiagonal solves with ``-X-`` (LAPACK
  ``gttrf``/``gttrs``, factorized once per channel).

All times are in units of ``1/r``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg.lapack import dgttrf, dgttrs

from .errors import (CrossCheckMismatch, InvalidParams, NonDecayingTail, SingularResolvent,
                     StepSizeUnderflow, TruncationOverflow)
from .fockspace import (CLIP_TOL, Channel, ChannelSplit, MaserParams, PhotonDistribution,
                        Tridiagonal, generator_matrix, jump_matrix, no_detection_matrix)
from .settings import DEFAULT_NUMERICS, Numerics

# ---------------------------------------------------------------------------
# explicit Runge-Kutta integrators
# ---------------------------------------------------------------------------

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

Rhs = Callable[[float, np.ndarray], np.ndarray]


class DormandPrince:
    """Adaptive embedded RK 5(4) integrator with first-same-as-last reuse.

    The state can be advanced repeatedly with :meth:`advance_to`; the step size
    carries over between calls.
    """

    max_steps = 5_000_000

    def __init__(self, rhs: Rhs, t0: float, y0: np.ndarray, rtol: float, atol: float,
                 h0: float = 0.05, callback: Optional[Callable[[float, np.ndarray], None]] = None):
        self.rhs = rhs
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.rtol, self.atol = rtol, atol
        self.h = h0
        self.callback = callback
        self.steps = 0
        self.rejected = 0
        self.est_error = 0.0
        self._k = np.empty((7, self.y.size))
        self._k[0] = rhs(self.t, self.y)

    def _attempt(self, h: float):
        t, y, k = self.t, self.y, self._k
        for i in range(1, 7):
            yi = y + h * (_A[i, :i] @ k[:i])
            k[i] = self.rhs(t + _C[i] * h, yi)
        y_new = yi  # the last stage is evaluated at the 5th-order solution
        err = h * (_E @ k)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = math.sqrt(float(np.mean((err / scale) ** 2)))
        return y_new, k[6].copy(), err, err_norm

    def advance_to(self, t_end: float) -> np.ndarray:
        while self.t < t_end:
            if self.steps + self.rejected > self.max_steps:
                raise StepSizeUnderflow(f"step budget exhausted at t={self.t:g}")
            h = min(self.h, t_end - self.t)
            y_new, f_new, err, err_norm = self._attempt(h)
            if err_norm <= 1.0:
                self.t = t_end if h == t_end - self.t else self.t + h
                self.y = y_new
                self._k[0] = f_new
                self.steps += 1
                self.est_error += float(np.abs(err).sum())
                if self.callback is not None:
                    self.callback(self.t, self.y)
                fac = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
                # a step truncated to hit t_end says nothing about the next one
                if h == self.h or fac < 1.0:
                    self.h = h * fac
            else:
                self.rejected += 1
                if not np.isfinite(err_norm):
                    self.h = h * 0.2
                else:
                    self.h = h * max(0.2, 0.9 * err_norm ** -0.2)
            if self.h < 1e-14 * max(1.0, abs(self.t)):
                raise StepSizeUnderflow(f"step size {self.h:.3e} underflowed at t={self.t:g}")
        return self.y


class FixedStepRK4:
    """Classical fourth-order Runge-Kutta with a fixed step; bit-reproducible."""

    def __init__(self, rhs: Rhs, t0: float, y0: np.ndarray, step: float,
                 callback: Optional[Callable[[float, np.ndarray], None]] = None):
        if step <= 0:
            raise InvalidParams("fixed step must be positive")
        self.rhs = rhs
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.step = step
        self.callback = callback
        self.steps = 0
        self.rejected = 0
        self.est_error = 0.0  # no embedded estimate

    def advance_to(self, t_end: float) -> np.ndarray:
        n = math.ceil((t_end - self.t) / self.step - 1e-12)
        if n <= 0:
            return self.y
        h = (t_end - self.t) / n
        t0, y = self.t, self.y
        for i in range(n):
            t = t0 + i * h
            k1 = self.rhs(t, y)
            k2 = self.rhs(t + h / 2, y + h / 2 * k1)
            k3 = self.rhs(t + h / 2, y + h / 2 * k2)
            k4 = self.rhs(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            self.steps += 1
            if self.callback is not None:
                self.callback(t + h, y)
        self.t, self.y = float(t_end), y
        return y


class LinearTrajectory:
    """``y' = G y`` for a tridiagonal ``G`` plus quadrature accumulators.

    With ``vector=False`` there is one scalar accumulator per entry of
    ``powers``: ``int t^p / p! * (functional @ y) dt``.  With ``vector=True`` a
    single vector accumulator ``int t^p / p! * y dt`` is kept (first power).
    Adaptive mode runs the compiled Dormand-Prince kernel; ``numerics.fixed_step``
    switches to the compiled fixed-step RK4 kernel.
    """

    def __init__(self, gen: Tridiagonal, seed: np.ndarray, numerics: Numerics,
                 functional: np.ndarray | None = None, powers: tuple[int, ...] = (0,),
                 vector: bool = False):
        seed = np.asarray(seed, dtype=float)
        self.gen = gen
        self.n = seed.size
        self.vector = vector
        self.powers = np.array(powers, dtype=np.int64)
        self.functional = (np.zeros(self.n) if functional is None
                           else np.ascontiguousarray(functional, dtype=float))
        m = self.n if vector else len(powers)
        self.z = np.concatenate([seed, np.zeros(m)])
        self.scale = float(np.abs(seed).sum())
        self.numerics = numerics
        self.t = 0.0
        self.h = 0.05
        self._stats = np.zeros(4)  # steps, rejected, est_error, max trace increase

    def rhs(self, t, z):
        """Right-hand side in plain NumPy (reference for the compiled kernels)."""
        y = z[: self.n]
        facts = np.array([math.factorial(int(p)) for p in self.powers], dtype=float)
        if self.vector:
            acc = (t ** self.powers[0] / facts[0]) * y
        else:
            acc = (self.functional @ y) * t ** self.powers / facts
        return np.concatenate([self.gen.matvec(y), acc])

    def advance_to(self, t_end: float) -> "LinearTrajectory":
        if t_end <= self.t:
            return self
        from ._kernels import STATUS_OK, dopri_tridiag, rk4_tridiag
        nm = self.numerics
        if nm.fixed_step > 0:
            self.t = rk4_tridiag(self.gen.lower, self.gen.diag, self.gen.upper, self.functional, self.vector,
                                 self.powers, self.z, self.t, float(t_end), nm.fixed_step, self._stats)
            return self
        atol = nm.ode_atol * max(self.scale, np.finfo(float).tiny)
        status, self.t, self.h = dopri_tridiag(
            self.gen.lower, self.gen.diag, self.gen.upper, self.functional, self.vector,
            self.powers, self.z, self.t, float(t_end), self.h, nm.ode_rtol, atol,
            DormandPrince.max_steps, self._stats)
        if status != STATUS_OK:
            raise StepSizeUnderflow(f"integrator failed at t={self.t:g} (status {status}, h={self.h:.3e})")
        return self

    @property
    def y(self) -> np.ndarray:
        return self.z[: self.n]

    @property
    def acc(self) -> np.ndarray:
        return self.z[self.n:]

    @property
    def steps(self) -> int:
        return int(self._stats[0])

    @property
    def est_error(self) -> float:
        return float(self._stats[2])

    @property
    def max_u_increase(self) -> float:
        return float(self._stats[3])

    def integrate_to_infinity(self) -> float:
        """Double the horizon until the accumulators settle; returns the final horizon.

        Convergence: one doubling changes the accumulators by less than
        ``1e-3 * ode_rtol`` relative (``1e-12`` floor in fixed-step mode) and the
        state has decayed below ``1e-6`` of the seed mass.
        """
        nm = self.numerics
        if self.scale == 0.0:
            return 0.0
        crit = 1e-3 * nm.ode_rtol
        if nm.fixed_step > 0:
            crit = max(crit, 1e-12)
        horizon = nm.horizon_start
        prev = self.advance_to(horizon).acc.copy()
        while True:
            horizon *= 2.0
            if horizon > nm.horizon_max:
                raise NonDecayingTail(f"integral not converged by horizon {nm.horizon_max:g}")
            cur = self.advance_to(horizon).acc
            if self.vector:
                settled = np.abs(cur - prev).sum() <= crit * np.abs(cur).sum()
            else:
                settled = bool(np.all(np.abs(cur - prev) <= crit * np.abs(cur)))
            if settled and np.abs(self.y).sum() < 1e-6 * self.scale:
                return horizon
            prev = cur.copy()


# ---------------------------------------------------------------------------
# finite-time evolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvolutionResult:
    final: PhotonDistribution
    u_final: float
    steps: int
    est_error: float
    max_u_increase: float = 0.0  # largest increase of the trace between accepted steps


def _evolve(gen: Tridiagonal, p0: PhotonDistribution, duration: float, numerics: Numerics) -> EvolutionResult:
    if duration < 0:
        raise InvalidParams("duration must be nonnegative")
    if duration == 0:
        return EvolutionResult(p0, p0.total, 0, 0.0)
    traj = LinearTrajectory(gen, p0.weights, numerics).advance_to(duration)
    y = traj.y.copy()
    norm = np.abs(y).sum()
    if norm > 0 and abs(y[-1]) > CLIP_TOL * norm:
        raise TruncationOverflow(f"evolved state has weight {y[-1]:.3e} at the cutoff")
    return EvolutionResult(PhotonDistribution(y), float(y.sum()), traj.steps, traj.est_error,
                           traj.max_u_increase)


def evolve_no_detection(split: ChannelSplit, p0: PhotonDistribution, duration: float,
                        tol: float | None = None, numerics: Numerics = DEFAULT_NUMERICS) -> EvolutionResult:
    """exp(X- * duration) p0 for the channel; ``u_final`` is the exclusion probability."""
    if tol is not None:
        numerics = numerics.replace(ode_rtol=tol)
    return _evolve(no_detection_matrix(split, p0.n_max), p0, duration, numerics)


def propagate_unconditioned(p0: PhotonDistribution, duration: float, params: MaserParams,
                            tol: float | None = None, numerics: Numerics = DEFAULT_NUMERICS) -> PhotonDistribution:
    """exp(X * duration) p0: trace-preserving evolution without conditioning."""
    if tol is not None:
        numerics = numerics.replace(ode_rtol=tol)
    return _evolve(generator_matrix(params, p0.n_max), p0, duration, numerics).final


@dataclass(frozen=True)
class TrajectoryIntegrals:
    values: tuple[float, ...]  # int_0^T t^j / j! functional @ y(t) dt, one per requested power j
    horizon: float
    steps: int


def trajectory_integrals(gen: Tridiagonal, seed: np.ndarray, functional: np.ndarray,
                         powers: tuple[int, ...] = (0,), t_end: float = math.inf,
                         numerics: Numerics = DEFAULT_NUMERICS) -> TrajectoryIntegrals:
    """Integrate y' = gen y from ``seed`` and return time moments of ``functional @ y``.

    ``t_end = inf`` extends the horizon adaptively (see
    :meth:`LinearTrajectory.integrate_to_infinity`).
    """
    traj = LinearTrajectory(gen, seed, numerics, functional=functional, powers=powers)
    if math.isfinite(t_end):
        horizon = t_end
        traj.advance_to(t_end)
    else:
        horizon = traj.integrate_to_infinity()
    return TrajectoryIntegrals(tuple(float(v) for v in traj.acc), horizon, traj.steps)


# ---------------------------------------------------------------------------
# direct resolvent solves
# ---------------------------------------------------------------------------

class Resolvent:
    """Factorized ``-X-`` for one channel; :meth:`apply` computes ``(-1/X-)^k v``."""

    def __init__(self, split: ChannelSplit, n_max: int):
        if split.is_blind:
            raise SingularResolvent(
                f"channel {split.channel.value} has no active detector; X- = X is singular")
        self.split = split
        self.n_max = n_max
        self.neg_gen = -no_detection_matrix(split, n_max)
        dl, d, du, du2, ipiv, info = dgttrf(self.neg_gen.lower, self.neg_gen.diag, self.neg_gen.upper)
        if info != 0:
            raise SingularResolvent(f"tridiagonal factorization failed (info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def apply(self, v: np.ndarray, power: int = 1) -> np.ndarray:
        x = np.asarray(v, dtype=float)
        for _ in range(power):
            x, info = dgttrs(*self._lu, x)
            if info != 0:
                raise SingularResolvent(f"tridiagonal solve failed (info={info})")
        return x


class Operator(str, enum.Enum):
    """Left operator O1 whose trace closes a resolvent chain."""

    JUMP_A = "jump_A"
    JUMP_B = "jump_B"
    JUMP_AB = "jump_AB"
    TRACE = "identity-trace"


def functional_row(op: Operator | str, params: MaserParams, n_max: int) -> np.ndarray:
    """Row vector c such that tr{O1 v} = c @ v."""
    op = Operator(op)
    if op is Operator.TRACE:
        return np.ones(n_max + 1)
    channel = {Operator.JUMP_A: Channel.A, Operator.JUMP_B: Channel.B, Operator.JUMP_AB: Channel.AB}[op]
    return jump_matrix(ChannelSplit(channel, params), n_max).column_sums()


@dataclass(frozen=True, eq=False)
class TraceQuery:
    left: Operator
    resolvent_channel: ChannelSplit
    resolvent_power: int
    seed: PhotonDistribution
    method: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "left", Operator(self.left))
        if self.resolvent_power not in (1, 2, 3):
            raise InvalidParams("resolvent_power must be 1, 2 or 3")
        if self.method not in ("direct_solve", "time_integration", "both"):
            raise InvalidParams(f"unknown method {self.method!r}")


def relative_gap(a: float, b: float) -> float:
    denom = max(abs(a), abs(b))
    return 0.0 if denom == 0 else abs(a - b) / denom


def resolvent_trace(q: TraceQuery, numerics: Numerics = DEFAULT_NUMERICS,
                    resolvent: Resolvent | None = None) -> float:
    """tr{O1 (-1/X-)^k seed} by time integration, direct solve, or both (cross-checked)."""
    split = q.resolvent_channel
    n_max = q.seed.n_max
    c = functional_row(q.left, split.params, n_max)
    direct = timed = None
    if q.method in ("direct_solve", "both"):
        res = resolvent if resolvent is not None else Resolvent(split, n_max)
        direct = float(c @ res.apply(q.seed.weights, q.resolvent_power))
    if q.method in ("time_integration", "both"):
        if split.is_blind:
            raise SingularResolvent("no active detector; the trajectory never decays")
        ti = trajectory_integrals(no_detection_matrix(split, n_max), q.seed.weights, c,
                                  powers=(q.resolvent_power - 1,), numerics=numerics)
        timed = ti.values[0]
    if q.method == "direct_solve":
        return direct
    if q.method == "time_integration":
        return timed
    gap = relative_gap(timed, direct)
    if gap > numerics.crosscheck_rtol:
        raise CrossCheckMismatch(
            f"time integration {timed:.15g} vs direct solve {direct:.15g} (relative gap {gap:.2e})")
    return timed


def resolvent_apply(split: ChannelSplit, v: np.ndarray, power: int = 1, method: str = "direct_solve",
                    numerics: Numerics = DEFAULT_NUMERICS, resolvent: Resolvent | None = None) -> np.ndarray:
    """Vector (-1/X-)^k v; the time-integration route accumulates the full vector."""
    v = np.asarray(v, dtype=float)
    direct = timed = None
    if method in ("direct_solve", "both"):
        res = resolvent if resolvent is not None else Resolvent(split, v.size - 1)
        direct = res.apply(v, power)
    if method in ("time_integration", "both"):
        if split.is_blind:
            raise SingularResolvent("no active detector; the trajectory never decays")
        timed = _vector_integral(no_detection_matrix(split, v.size - 1), v, power, numerics)
    if method == "direct_solve":
        return direct
    if method == "time_integration":
        return timed
    gap = np.abs(timed - direct).sum() / max(np.abs(direct).sum(), np.finfo(float).tiny)
    if gap > numerics.crosscheck_rtol:
        raise CrossCheckMismatch(f"vector resolvent relative L1 gap {gap:.2e}")
    return timed


def _vector_integral(gen: Tridiagonal, v: np.ndarray, power: int, numerics: Numerics) -> np.ndarray:
    traj = LinearTrajectory(gen, v, numerics, powers=(power - 1,), vector=True)
    traj.integrate_to_infinity()
    return traj.acc.copy()
