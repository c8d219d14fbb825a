"""Numerical settings shared by the solvers.  Every default is printable from the CLI."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import InvalidParams

METHODS = ("direct_solve", "time_integration", "both")


@dataclass(frozen=True)
class Numerics:
    n_max_cap: int = 400          # hard upper bound on the photon-number cutoff
    tail_tol: float = 1e-12       # steady-state tail mass defining the cutoff (before doubling)
    n_max_floor: int = 32
    ss_tol: float = 1e-10         # allowed ||X rho_ss||_1
    ode_rtol: float = 1e-10       # local error tolerance of the adaptive integrator
    ode_atol: float = 1e-15       # absolute floor, relative to the seed's L1 norm
    fixed_step: float = 0.0       # > 0 switches to classical RK4 with this step (units of 1/r)
    method: str = "direct_solve"  # resolvent route used by the statistics module
    crosscheck_rtol: float = 1e-7
    horizon_start: float = 16.0   # first horizon of improper integrals (units of 1/r)
    horizon_max: float = 1e7
    max_sequence_length: int = 8

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParams(f"method must be one of {METHODS}, got {self.method!r}")
        if self.n_max_cap < 2:
            raise InvalidParams("n_max_cap must be at least 2")
        if self.ode_rtol <= 0 or self.tail_tol <= 0 or self.ss_tol <= 0:
            raise InvalidParams("tolerances must be positive")
        if self.fixed_step < 0:
            raise InvalidParams("fixed_step must be nonnegative")

    def replace(self, **changes) -> "Numerics":
        return dataclasses.replace(self, **changes)


DEFAULT_NUMERICS = Numerics()
