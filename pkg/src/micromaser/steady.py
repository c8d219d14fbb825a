"""Steady-state photon statistics and trapping-state angles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidParams, NonConvergentTruncation
from .fockspace import MaserParams, PhotonDistribution, apply_generator, generator_matrix
from .settings import DEFAULT_NUMERICS, Numerics


@dataclass(frozen=True, eq=False)
class SteadyState:
    dist: PhotonDistribution
    residual: float
    params: MaserParams
    tail_mass: float  # closed-form mass discarded above n_max, estimated up to the cap

    @property
    def n_max(self) -> int:
        return self.dist.n_max

    @property
    def weights(self) -> np.ndarray:
        return self.dist.weights

    def mean_photon_number(self) -> float:
        return float(np.arange(self.n_max + 1) @ self.weights)


def log_ratio_factors(params: MaserParams, n_upto: int) -> np.ndarray:
    """log of p_j / p_{j-1} for j = 1..n_upto (may contain -inf)."""
    j = np.arange(1, n_upto + 1, dtype=float)
    nu = params.nu
    factor = nu / (nu + 1.0) + params.n_ex / (nu + 1.0) * np.sin(params.phi * np.sqrt(j)) ** 2 / j
    with np.errstate(divide="ignore"):
        return np.log(factor)


def _log_weights(params: MaserParams, n_upto: int) -> np.ndarray:
    logw = np.zeros(n_upto + 1)
    logw[1:] = np.cumsum(log_ratio_factors(params, n_upto))
    return logw


def choose_n_max(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS) -> int:
    """Smallest cutoff whose closed-form tail is below ``tail_tol``, doubled, floored and capped."""
    cap = numerics.n_max_cap
    logw = _log_weights(params, cap)
    logp = logw - logsumexp(logw)
    p = np.exp(logp)
    if p[-1] >= numerics.tail_tol:
        raise NonConvergentTruncation(
            f"steady-state weight at the cap n={cap} is {p[-1]:.3e}; raise n_max_cap")
    # tail[n] = sum_{m > n} p_m
    tail = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    n_tail = int(np.argmax(tail < numerics.tail_tol))
    return min(cap, max(numerics.n_max_floor, 2 * n_tail))


def steady_state(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                 n_max: int | None = None) -> SteadyState:
    """Closed-form steady state, normalized in log space and certified against X.

    The residual ``||X rho_ss||_1`` is recorded; it is not checked here (see
    :func:`certify`) so that perturbed states can still be inspected.
    """
    if n_max is None:
        n_max = choose_n_max(params, numerics)
    full = _log_weights(params, max(n_max, numerics.n_max_cap))
    norm_full = logsumexp(full)
    logw = full[: n_max + 1]
    weights = np.exp(logw - logsumexp(logw))
    tail_mass = float(np.exp(logsumexp(full[n_max + 1:]) - norm_full)) if full.size > n_max + 1 else 0.0
    dist = PhotonDistribution(weights)
    residual = float(np.abs(apply_generator(dist, params).weights).sum())
    return SteadyState(dist=dist, residual=residual, params=params, tail_mass=tail_mass)


def certify(ss: SteadyState, numerics: Numerics = DEFAULT_NUMERICS) -> bool:
    return ss.residual <= numerics.ss_tol and abs(ss.dist.total - 1.0) <= 1e-12


def steady_state_linear_solve(params: MaserParams, n_max: int) -> np.ndarray:
    """Null vector of the truncated generator, normalized to unit trace.

    Independent of the product formula: one balance equation is replaced by
    the normalization condition and the dense system is solved directly.
    """
    x = generator_matrix(params, n_max).to_dense()
    x[-1, :] = 1.0
    rhs = np.zeros(n_max + 1)
    rhs[-1] = 1.0
    return np.linalg.solve(x, rhs)


@dataclass(frozen=True)
class TrappingAngle:
    n0: int
    q: int
    phi: float


def trapping_angles(n0_max: int, phi_max: float) -> list[TrappingAngle]:
    """All angles q*pi/sqrt(n0 + 1) <= phi_max with n0 <= n0_max and q >= 1, sorted by angle."""
    if n0_max < 0:
        raise InvalidParams("n0_max must be nonnegative")
    if phi_max <= 0:
        raise InvalidParams("phi_max must be positive")
    out = []
    for n0 in range(n0_max + 1):
        q = 1
        while (phi := q * math.pi / math.sqrt(n0 + 1)) <= phi_max:
            out.append(TrappingAngle(n0, q, phi))
            q += 1
    out.sort(key=lambda t: (t.phi, t.n0))
    return out
