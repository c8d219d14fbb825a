"""Diagonal cavity states on a truncated Fock space and the superoperators acting on them.

The standard micromaser keeps the field density operator diagonal in the photon
number basis, so every state is a vector ``p[n]`` for ``n = 0..n_max`` and every
superoperator (damping, atom passage, their detection splittings) is a
tridiagonal linear map.  Two routes are provided for each operator: a
matrix-free ``apply_*`` function and an explicit :class:`Tridiagonal` matrix.
They are written independently and are expected to agree to round-off.

Time is measured in units of ``1/r`` (``r`` = atom injection rate) internally;
the damping term therefore carries the prefactor ``1/N_ex = gamma/r``.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidParams, TruncationOverflow

# Mass clipped at the top of the Fock space, relative to ||p||_1, that is tolerated.
CLIP_TOL = 1e-9

TIME_UNITS = ("cavity_decay", "atom_injection")


def phi_from_tint(t_int_us: float, g_khz: float) -> float:
    """Accumulated Rabi angle in radians for an interaction time in microseconds."""
    return (g_khz * 1e3) * (t_int_us * 1e-6)


def tint_from_phi(phi: float, g_khz: float) -> float:
    return phi / (g_khz * 1e3) * 1e6


@dataclass(frozen=True)
class MaserParams:
    """Physical configuration of the standard micromaser.

    ``n_ex`` is r/gamma, ``nu`` the thermal photon number, ``phi`` the accumulated
    Rabi angle and ``eta_a``/``eta_b`` the efficiencies of the detectors for atoms
    leaving in the upper (A) and lower (B) maser level.  ``time_unit`` selects
    whether reported times are in units of 1/gamma or 1/r.
    """

    n_ex: float
    nu: float
    phi: float
    eta_a: float = 1.0
    eta_b: float = 1.0
    time_unit: str = "cavity_decay"

    def __post_init__(self):
        if not np.isfinite(self.n_ex) or self.n_ex <= 0:
            raise InvalidParams(f"n_ex must be positive, got {self.n_ex}")
        if not np.isfinite(self.nu) or self.nu < 0:
            raise InvalidParams(f"nu must be nonnegative, got {self.nu}")
        if not np.isfinite(self.phi) or self.phi < 0:
            raise InvalidParams(f"phi must be nonnegative, got {self.phi}")
        for name in ("eta_a", "eta_b"):
            eta = getattr(self, name)
            if not 0.0 <= eta <= 1.0:
                raise InvalidParams(f"{name} must lie in [0, 1], got {eta}")
        if self.time_unit not in TIME_UNITS:
            raise InvalidParams(f"time_unit must be one of {TIME_UNITS}, got {self.time_unit!r}")

    @classmethod
    def from_interaction_time(cls, t_int_us: float, g_khz: float, **kwargs) -> "MaserParams":
        return cls(phi=phi_from_tint(t_int_us, g_khz), **kwargs)

    def replace(self, **changes) -> "MaserParams":
        return dataclasses.replace(self, **changes)

    @property
    def time_scale(self) -> float:
        """Factor converting a duration in units of 1/r to the reporting unit."""
        return 1.0 / self.n_ex if self.time_unit == "cavity_decay" else 1.0

    def to_internal_time(self, t: float) -> float:
        """Convert a duration in the reporting unit to units of 1/r."""
        return t / self.time_scale


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Photon-number weights ``p[0..n_max]`` of a diagonal (possibly non-normalized) state."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise InvalidParams("weights must be a non-empty 1-D vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def fock(cls, n: int, n_max: int) -> "PhotonDistribution":
        w = np.zeros(n_max + 1)
        w[n] = 1.0
        return cls(w)

    @property
    def n_max(self) -> int:
        return self.weights.size - 1

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def tail_ratio(self) -> float:
        peak = np.max(np.abs(self.weights))
        return float(abs(self.weights[-1]) / peak) if peak > 0 else 0.0

    def normalized(self) -> "PhotonDistribution":
        return PhotonDistribution(self.weights / self.weights.sum())

    def __len__(self):
        return self.weights.size


Vector = Union[PhotonDistribution, np.ndarray]


def _as_array(p: Vector) -> np.ndarray:
    return p.weights if isinstance(p, PhotonDistribution) else np.asarray(p, dtype=float)


class Channel(str, enum.Enum):
    A = "A"
    B = "B"
    AB = "AB"


@dataclass(frozen=True)
class ChannelSplit:
    """A detection channel: jump part X+ and the complementary no-detection generator X-."""

    channel: Channel
    params: MaserParams

    def __post_init__(self):
        object.__setattr__(self, "channel", Channel(self.channel))

    @property
    def eta_weights(self) -> tuple[float, float]:
        """Efficiencies applied to the A and B passage operators in the jump part."""
        p = self.params
        if self.channel is Channel.A:
            return p.eta_a, 0.0
        if self.channel is Channel.B:
            return 0.0, p.eta_b
        return p.eta_a, p.eta_b

    @property
    def is_blind(self) -> bool:
        return self.eta_weights == (0.0, 0.0)


# --------------------------------------------------------------------------
# matrix-free application
# --------------------------------------------------------------------------

def _rabi_sq(phi: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """cos^2 and sin^2 of phi*sqrt(n+1) for n = 0..n_max."""
    arg = phi * np.sqrt(np.arange(1, n_max + 2))
    return np.cos(arg) ** 2, np.sin(arg) ** 2


def apply_damping(p: Vector, params: MaserParams) -> PhotonDistribution:
    """Thermal damping L, in units of the injection rate."""
    w = _as_array(p)
    n = np.arange(w.size)
    nu = params.nu
    up = np.zeros_like(w)   # p_{n+1}
    up[:-1] = w[1:]
    down = np.zeros_like(w)  # p_{n-1}
    down[1:] = w[:-1]
    out = (nu + 1.0) * ((n + 1) * up - n * w) + nu * (n * down - (n + 1) * w)
    return PhotonDistribution(out / params.n_ex)


def apply_pass_excited(p: Vector, params: MaserParams) -> PhotonDistribution:
    """Passage of an atom that leaves in the upper level: p_n -> cos^2(phi sqrt(n+1)) p_n."""
    w = _as_array(p)
    c2, _ = _rabi_sq(params.phi, w.size - 1)
    return PhotonDistribution(c2 * w)


def clipped_mass(p: Vector, params: MaserParams) -> float:
    """Weight the de-excitation map would push to n_max + 1."""
    w = _as_array(p)
    return float(np.sin(params.phi * np.sqrt(w.size)) ** 2 * w[-1])


def apply_pass_deexcited(p: Vector, params: MaserParams) -> PhotonDistribution:
    """Passage of an atom that leaves in the lower level, depositing one photon.

    Raises TruncationOverflow if the mass lost above ``n_max`` exceeds
    ``CLIP_TOL * ||p||_1``.
    """
    w = _as_array(p)
    _, s2 = _rabi_sq(params.phi, w.size - 1)
    lost = abs(clipped_mass(w, params))
    norm = np.abs(w).sum()
    if lost > CLIP_TOL * max(norm, np.finfo(float).tiny):
        raise TruncationOverflow(f"clipped mass {lost:.3e} exceeds {CLIP_TOL:g} of ||p||_1 = {norm:.3e}")
    out = np.zeros_like(w)
    out[1:] = s2[:-1] * w[:-1]
    return PhotonDistribution(out)


def apply_generator(p: Vector, params: MaserParams) -> PhotonDistribution:
    """Full evolution operator X = L + A + B - 1."""
    w = _as_array(p)
    out = (apply_damping(w, params).weights + apply_pass_excited(w, params).weights
           + apply_pass_deexcited(w, params).weights - w)
    return PhotonDistribution(out)


def apply_jump(split: ChannelSplit, p: Vector) -> PhotonDistribution:
    """Detection part X+ of the channel."""
    w = _as_array(p)
    eta_a, eta_b = split.eta_weights
    out = np.zeros_like(w)
    if eta_a:
        out += eta_a * apply_pass_excited(w, split.params).weights
    if eta_b:
        out += eta_b * apply_pass_deexcited(w, split.params).weights
    return PhotonDistribution(out)


def apply_no_detection(split: ChannelSplit, p: Vector) -> PhotonDistribution:
    """No-detection generator X- = X - X+."""
    w = _as_array(p)
    return PhotonDistribution(apply_generator(w, split.params).weights - apply_jump(split, w).weights)


# --------------------------------------------------------------------------
# explicit tridiagonal matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tridiagonal:
    """Square tridiagonal matrix stored as (sub, main, super) diagonals.

    ``lower[i]`` is entry (i+1, i), ``upper[i]`` is entry (i, i+1).
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> "Tridiagonal":
        return cls(np.zeros(size - 1), np.zeros(size), np.zeros(size - 1))

    @property
    def size(self) -> int:
        return self.diag.size

    def __add__(self, other: "Tridiagonal") -> "Tridiagonal":
        return Tridiagonal(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper)

    def __sub__(self, other: "Tridiagonal") -> "Tridiagonal":
        return Tridiagonal(self.lower - other.lower, self.diag - other.diag, self.upper - other.upper)

    def __mul__(self, scalar: float) -> "Tridiagonal":
        return Tridiagonal(scalar * self.lower, scalar * self.diag, scalar * self.upper)

    __rmul__ = __mul__

    def __neg__(self) -> "Tridiagonal":
        return self * -1.0

    def shift(self, value: float) -> "Tridiagonal":
        """Return self + value * identity."""
        return Tridiagonal(self.lower, self.diag + value, self.upper)

    def matvec(self, y: np.ndarray) -> np.ndarray:
        """Product with a vector or with each column of a 2-D array."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            out = self.diag * y
            out[1:] += self.lower * y[:-1]
            out[:-1] += self.upper * y[1:]
            return out
        out = self.diag[:, None] * y
        out[1:] += self.lower[:, None] * y[:-1]
        out[:-1] += self.upper[:, None] * y[1:]
        return out

    def column_sums(self) -> np.ndarray:
        """Row vector c with c @ y = sum(self @ y); the trace functional of the map."""
        c = self.diag.copy()
        c[:-1] += self.lower
        c[1:] += self.upper
        return c

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def to_banded(self) -> np.ndarray:
        """LAPACK (1, 1) band storage, as used by scipy.linalg.solve_banded."""
        ab = np.zeros((3, self.size))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return ab


def damping_matrix(params: MaserParams, n_max: int) -> Tridiagonal:
    n = np.arange(n_max + 1, dtype=float)
    nu = params.nu
    diag = -((nu + 1.0) * n + nu * (n + 1.0))
    upper = (nu + 1.0) * n[1:]  # row n gains from n + 1
    lower = nu * n[1:]          # row n gains from n - 1
    return Tridiagonal(lower, diag, upper) * (1.0 / params.n_ex)


def excited_matrix(params: MaserParams, n_max: int) -> Tridiagonal:
    c2, _ = _rabi_sq(params.phi, n_max)
    return Tridiagonal(np.zeros(n_max), c2, np.zeros(n_max))


def deexcited_matrix(params: MaserParams, n_max: int) -> Tridiagonal:
    _, s2 = _rabi_sq(params.phi, n_max)
    return Tridiagonal(s2[:-1].copy(), np.zeros(n_max + 1), np.zeros(n_max))


def generator_matrix(params: MaserParams, n_max: int) -> Tridiagonal:
    return (damping_matrix(params, n_max) + excited_matrix(params, n_max)
            + deexcited_matrix(params, n_max)).shift(-1.0)


def jump_matrix(split: ChannelSplit, n_max: int) -> Tridiagonal:
    eta_a, eta_b = split.eta_weights
    return (eta_a * excited_matrix(split.params, n_max)
            + eta_b * deexcited_matrix(split.params, n_max))


def no_detection_matrix(split: ChannelSplit, n_max: int) -> Tridiagonal:
    return generator_matrix(split.params, n_max) - jump_matrix(split, n_max)
