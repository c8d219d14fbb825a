"""Parameter sweeps over the Rabi angle or the interaction time, written as CSV."""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import statistics as st
from .errors import InvalidParams, MicromaserError
from .fockspace import MaserParams, phi_from_tint, tint_from_phi
from .settings import DEFAULT_NUMERICS, Numerics
from .steady import trapping_angles


@dataclass(frozen=True)
class PointContext:
    """Per-point settings that some observables need beyond the physical parameters."""

    t_obs: float = 1.0
    t_avg_lo: float = 1.0
    t_avg_hi: float = 4.0
    t_avg_points: int = 16


# name -> (unit label, evaluator(model, context))
OBSERVABLES: dict[str, tuple[str, Callable]] = {
    "r_a": ("rate", lambda m, c: st.detection_rates(m.params, m.numerics, m).r_a),
    "r_b": ("rate", lambda m, c: st.detection_rates(m.params, m.numerics, m).r_b),
    "p_a": ("1", lambda m, c: st.detection_rates(m.params, m.numerics, m).p_a),
    "p_b": ("1", lambda m, c: st.detection_rates(m.params, m.numerics, m).p_b),
    "inversion": ("1", lambda m, c: st.atomic_inversion(m.params, m.numerics, m)[0]),
    "inversion_tilde": ("1", lambda m, c: st.atomic_inversion(m.params, m.numerics, m)[1]),
    "gamma": ("1", lambda m, c: st.gamma_switch(m.params, m.numerics, m)),
    "n_a": ("1", lambda m, c: st.mean_successive(m.params, m.numerics, m).n_a),
    "n_b": ("1", lambda m, c: st.mean_successive(m.params, m.numerics, m).n_b),
    "n_mean": ("1", lambda m, c: st.mean_successive(m.params, m.numerics, m).n_mean),
    "n_norm": ("1", lambda m, c: st.mean_successive(m.params, m.numerics, m).n_norm),
    "t_aa": ("time", lambda m, c: st.waiting_time("A", "A", m.params, m.numerics, m).value),
    "t_bb": ("time", lambda m, c: st.waiting_time("B", "B", m.params, m.numerics, m).value),
    "t_ab": ("time", lambda m, c: st.waiting_time("A", "B", m.params, m.numerics, m).value),
    "t_ba": ("time", lambda m, c: st.waiting_time("B", "A", m.params, m.numerics, m).value),
    "t_ab_norm": ("1", lambda m, c: st.waiting_time("A", "B", m.params, m.numerics, m).normalized),
    "t_ba_norm": ("1", lambda m, c: st.waiting_time("B", "A", m.params, m.numerics, m).normalized),
    # r * eta_target * <t>: the efficiency-compensated waiting times
    "t_ab_scaled": ("1", lambda m, c: m.params.eta_b * st.waiting_time(
        "A", "B", m.params, m.numerics, m).value / m.params.time_scale),
    "t_ba_scaled": ("1", lambda m, c: m.params.eta_a * st.waiting_time(
        "B", "A", m.params, m.numerics, m).value / m.params.time_scale),
    "t2_aa": ("time^2", lambda m, c: st.waiting_time_squared("A", m.params, m.numerics, m).value),
    "t2_bb": ("time^2", lambda m, c: st.waiting_time_squared("B", m.params, m.numerics, m).value),
    "t2_aa_norm": ("1", lambda m, c: st.waiting_time_squared("A", m.params, m.numerics, m).normalized),
    "t2_bb_norm": ("1", lambda m, c: st.waiting_time_squared("B", m.params, m.numerics, m).normalized),
    "q_a_inf": ("1", lambda m, c: st.fano_mandel("A", math.inf, m.params, m.numerics, m)),
    "q_b_inf": ("1", lambda m, c: st.fano_mandel("B", math.inf, m.params, m.numerics, m)),
    "q_a_inf_scaled": ("1", lambda m, c: st.fano_mandel("A", math.inf, m.params, m.numerics, m) / m.params.eta_a),
    "q_b_inf_scaled": ("1", lambda m, c: st.fano_mandel("B", math.inf, m.params, m.numerics, m) / m.params.eta_b),
    "q_a_t": ("1", lambda m, c: st.fano_mandel("A", c.t_obs, m.params, m.numerics, m)),
    "q_b_t": ("1", lambda m, c: st.fano_mandel("B", c.t_obs, m.params, m.numerics, m)),
    "q_b_avg": ("1", lambda m, c: st.fano_mandel_window_average(
        "B", c.t_avg_lo, c.t_avg_hi, m.params, c.t_avg_points, m.numerics, m)),
    "mean_photons": ("1", lambda m, c: m.steady.mean_photon_number()),
    "residual": ("1", lambda m, c: m.steady.residual),
    "n_max": ("1", lambda m, c: float(m.n_max)),
}


def evaluate_point(params: MaserParams, observables, numerics: Numerics = DEFAULT_NUMERICS,
                   context: PointContext = PointContext()) -> tuple[dict[str, float], list[str]]:
    """Evaluate observables at one point; failures become NaN plus an error entry."""
    errors = []
    try:
        model = st.MaserModel(params, numerics)
    except MicromaserError as exc:
        return {name: math.nan for name in observables}, [f"{type(exc).__name__}"]
    values = {}
    for name in observables:
        try:
            values[name] = float(OBSERVABLES[name][1](model, context))
        except (MicromaserError, ZeroDivisionError) as exc:
            values[name] = math.nan
            errors.append(f"{name}:{type(exc).__name__}")
    return values, errors


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    points: int
    params: MaserParams
    observables: tuple[str, ...]
    coupling_g: float | None = None   # kHz
    t_int_sigma: float = 0.0          # microseconds
    gauss_points: int = 9
    context: PointContext = PointContext()
    n0_max: int = 4

    def __post_init__(self):
        if self.axis not in ("phi", "t_int"):
            raise InvalidParams("axis must be 'phi' or 't_int'")
        if not self.start < self.stop:
            raise InvalidParams("start must be below stop")
        if self.points < 2:
            raise InvalidParams("a sweep needs at least 2 points")
        if self.axis == "t_int" and not self.coupling_g:
            raise InvalidParams("a t_int sweep needs the coupling g (kHz)")
        if self.t_int_sigma < 0:
            raise InvalidParams("t_int_sigma must be nonnegative")
        if self.t_int_sigma > 0:
            if self.gauss_points < 3:
                raise InvalidParams("gauss_points must be at least 3 when averaging")
            if not self.coupling_g:
                raise InvalidParams("interaction-time averaging needs the coupling g (kHz)")
        unknown = [o for o in self.observables if o not in OBSERVABLES]
        if unknown:
            raise InvalidParams(f"unknown observables: {', '.join(unknown)}")
        if not self.observables:
            raise InvalidParams("no observables requested")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    def phi_of(self, x: float) -> float:
        return phi_from_tint(x, self.coupling_g) if self.axis == "t_int" else x

    def tint_of(self, x: float) -> float | None:
        if self.axis == "t_int":
            return x
        return tint_from_phi(x, self.coupling_g) if self.coupling_g else None


def gauss_nodes(center_us: float, sigma_us: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes/weights for a normal t_int distribution; negative times dropped.

    Weights of the surviving nodes are renormalized to sum to one.
    """
    x, w = np.polynomial.hermite_e.hermegauss(n)
    t = center_us + sigma_us * x
    w = w / w.sum()
    keep = t >= 0
    return t[keep], w[keep] / w[keep].sum()


def _sweep_point(args) -> tuple[dict[str, float], list[str]]:
    spec, numerics, x = args
    if spec.t_int_sigma <= 0:
        return evaluate_point(spec.params.replace(phi=spec.phi_of(x)), spec.observables, numerics, spec.context)
    tint = spec.tint_of(x)
    nodes, weights = gauss_nodes(tint, spec.t_int_sigma, spec.gauss_points)
    acc = {name: 0.0 for name in spec.observables}
    errors = []
    for t_node, w in zip(nodes, weights):
        vals, errs = evaluate_point(spec.params.replace(phi=phi_from_tint(t_node, spec.coupling_g)),
                                    spec.observables, numerics, spec.context)
        for name in spec.observables:
            acc[name] += float(w) * vals[name]
        errors.extend(e for e in errs if e not in errors)
    return acc, errors


@dataclass
class SweepResult:
    spec: SweepSpec
    axis_values: np.ndarray
    rows: list[dict[str, float]]
    status: list[str]
    markers: list = field(default_factory=list)


def run_sweep(spec: SweepSpec, numerics: Numerics = DEFAULT_NUMERICS, workers: int = 1) -> SweepResult:
    """Evaluate every grid point; rows come back in axis order whatever the worker count."""
    grid = spec.grid
    jobs = [(spec, numerics, float(x)) for x in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    rows = [r[0] for r in results]
    status = ["ok" if not r[1] else "error:" + ";".join(r[1]) for r in results]
    return SweepResult(spec, grid, rows, status, sweep_markers(spec))


def sweep_markers(spec: SweepSpec) -> list[dict]:
    phi_lo, phi_hi = spec.phi_of(spec.start), spec.phi_of(spec.stop)
    out = []
    for ta in trapping_angles(spec.n0_max, phi_hi):
        if ta.phi < phi_lo:
            continue
        out.append({"n0": ta.n0, "q": ta.q, "phi_rad": ta.phi,
                    "t_int_us": tint_from_phi(ta.phi, spec.coupling_g) if spec.coupling_g else math.nan})
    return out


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def unit_labels(params: MaserParams) -> dict[str, str]:
    time = "1/gamma" if params.time_unit == "cavity_decay" else "1/r"
    rate = "gamma" if params.time_unit == "cavity_decay" else "r"
    return {"time": time, "time^2": f"({time})^2", "rate": rate, "1": "dimensionless"}


def format_csv(result: SweepResult, header_lines: list[str]) -> str:
    spec = result.spec
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    labels = unit_labels(spec.params)
    axis_name = "phi" if spec.axis == "phi" else "t_int"
    axis_unit = "rad" if spec.axis == "phi" else "us"
    units = [f"{axis_name}[{axis_unit}]"] + [f"{o}[{labels[OBSERVABLES[o][0]]}]" for o in spec.observables]
    buf.write("# units: " + " ".join(units) + "\n")
    buf.write(",".join([axis_name] + list(spec.observables) + ["status"]) + "\n")
    for x, row, status in zip(result.axis_values, result.rows, result.status):
        cells = [_fmt(float(x))] + [_fmt(row[o]) for o in spec.observables] + [status]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def format_markers(markers: list[dict]) -> str:
    lines = ["n0,q,phi_rad,t_int_us"]
    for m in markers:
        lines.append(f"{m['n0']},{m['q']},{m['phi_rad']!r},{m['t_int_us']!r}")
    return "\n".join(lines) + "\n"
