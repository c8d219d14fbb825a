"""Self-check suite: trace identities, waiting-time identities, symmetries and Monte-Carlo agreement."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import statistics as st
from . import trajectory as mc
from .errors import DegenerateChannel, InsufficientData, MicromaserError
from .fockspace import (Channel, ChannelSplit, MaserParams, PhotonDistribution, apply_generator,
                        apply_jump, apply_no_detection, damping_matrix, deexcited_matrix,
                        excited_matrix, generator_matrix, jump_matrix, no_detection_matrix)
from .propagator import Operator, TraceQuery, relative_gap, resolvent_trace
from .settings import DEFAULT_NUMERICS, Numerics
from .steady import SteadyState, steady_state, steady_state_linear_solve

PASS, FAIL, DEGENERATE = "pass", "fail", "degenerate"
MC_SIGMAS = 3.0


@dataclass
class Check:
    name: str
    status: str
    measured: float = math.nan
    tolerance: float = math.nan
    detail: str = ""

    def line(self) -> str:
        out = f"{self.status.upper():<10} {self.name:<28}"
        if not math.isnan(self.measured):
            out += f" measured={self.measured:.3e} tol={self.tolerance:.1e}"
        return out + (f"  {self.detail}" if self.detail else "")


@dataclass
class VerifyReport:
    params: MaserParams
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def perturbed_steady(ss: SteadyState, amount: float = 1e-3) -> SteadyState:
    """A deliberately wrong steady state, for exercising the residual check."""
    n = np.arange(ss.n_max + 1)
    w = ss.weights * (1.0 + amount * np.sin(n + 1.0))
    dist = PhotonDistribution(w / w.sum())
    residual = float(np.abs(apply_generator(dist, ss.params).weights).sum())
    return SteadyState(dist, residual, ss.params, ss.tail_mass)


def _run(report: VerifyReport, name: str, tol: float, fn: Callable[[], float], detail: str = "") -> None:
    try:
        measured = float(fn())
    except DegenerateChannel as exc:
        report.checks.append(Check(name, DEGENERATE, detail=str(exc)))
        return
    except MicromaserError as exc:
        report.checks.append(Check(name, FAIL, detail=f"{type(exc).__name__}: {exc}"))
        return
    status = PASS if measured <= tol else FAIL
    report.checks.append(Check(name, status, measured, tol, detail))


def _random_vector(n_max: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.random(n_max + 1)
    v[n_max // 2:] = 0.0   # keep clear of the truncation edge
    return v / v.sum()


def analytic_checks(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                    inject_fault: bool = False, report: VerifyReport | None = None) -> VerifyReport:
    report = report or VerifyReport(params)
    ss = steady_state(params, numerics)
    if inject_fault:
        ss = perturbed_steady(ss)
    m = st.MaserModel(params, numerics, steady=ss)
    n_max = m.n_max
    rho = m.rho
    rng = np.random.default_rng(0)
    v = _random_vector(n_max, rng)

    _run(report, "steady_residual", numerics.ss_tol,
         lambda: np.abs(generator_matrix(params, n_max).matvec(rho)).sum())
    _run(report, "steady_vs_linear_solve", 1e-10,
         lambda: np.abs(rho - steady_state_linear_solve(params, n_max)).max())

    def trace_ids():
        worst = 0.0
        for x in (rho, v):
            worst = max(worst, abs(damping_matrix(params, n_max).matvec(x).sum()),
                        abs((excited_matrix(params, n_max).matvec(x) + deexcited_matrix(params, n_max).matvec(x)).sum()
                            - x.sum()),
                        abs(generator_matrix(params, n_max).matvec(x).sum()))
        return worst
    _run(report, "trace_preservation", 1e-12, trace_ids)

    def split_ids():
        worst = 0.0
        for ch in Channel:
            split = ChannelSplit(ch, params)
            lhs = jump_matrix(split, n_max).matvec(v) + no_detection_matrix(split, n_max).matvec(v)
            worst = max(worst, np.abs(lhs - generator_matrix(params, n_max).matvec(v)).max())
            mf = apply_jump(split, v).weights + apply_no_detection(split, v).weights
            worst = max(worst, np.abs(mf - lhs).max())
        return worst
    _run(report, "channel_split", 1e-13, split_ids)

    for ch in ("A", "B"):
        def t_identity(ch=ch):
            rates = st.detection_rates(params, numerics, m)
            r = rates.r_a if ch == "A" else rates.r_b
            return abs(st.waiting_time(ch, ch, params, numerics, m).value * r - 1.0)
        _run(report, f"t_{ch}{ch}_identity", 1e-8, t_identity)

    def gamma_sym():
        g1, g2 = st.gamma_orderings(params, numerics, m)
        return relative_gap(g1, g2)
    _run(report, "gamma_ordering_symmetry", 1e-9, gamma_sym)

    _run(report, "p_ab_equals_p_ba", 1e-9,
         lambda: abs(st.sequence_probability("AB", params, numerics, m).value
                     - st.sequence_probability("BA", params, numerics, m).value))

    def seq_sums():
        worst = 0.0
        probs = {"": 1.0}
        for length in range(1, 5):
            for s in st.all_sequences(length):
                probs[s] = st.sequence_probability(s, params, numerics, m).value
            worst = max(worst, abs(sum(probs[s] for s in st.all_sequences(length)) - 1.0))
        for s, p in probs.items():
            if len(s) < 4:
                worst = max(worst, abs(probs[s + "A"] + probs[s + "B"] - p))
        return worst
    _run(report, "sequence_algebra", 1e-8, seq_sums)

    def t2_routes():
        worst = 0.0
        for ch in ("A", "B"):
            rep = st.waiting_time_squared(ch, params, numerics, m)
            worst = max(worst, relative_gap(rep.value, rep.meta["alt_route"]))
        return worst
    _run(report, "t2_route_agreement", 1e-8, t2_routes)

    def method_gap():
        worst = 0.0
        queries = [(Operator.JUMP_A, Channel.AB, 1, m.jump(Channel.B)),
                   (Operator.TRACE, Channel.B, 1, m.jump(Channel.A)),
                   (Operator.JUMP_A, Channel.A, 2, m.jump(Channel.A)),
                   (Operator.JUMP_B, Channel.B, 3, m.jump(Channel.B))]
        for left, ch, power, seed in queries:
            split = m.split(ch)
            base = dict(left=left, resolvent_channel=split, resolvent_power=power, seed=PhotonDistribution(seed))
            a = resolvent_trace(TraceQuery(method="direct_solve", **base), numerics, m.resolvent(ch))
            b = resolvent_trace(TraceQuery(method="time_integration", **base), numerics)
            worst = max(worst, relative_gap(a, b))
        return worst
    _run(report, "resolvent_method_agreement", numerics.crosscheck_rtol, method_gap)

    def fano_routes():
        d = st.fano_mandel_curve("B", [1.0, math.inf], params, numerics, m, method="direct_solve")
        ti = st.fano_mandel_curve("B", [1.0, math.inf], params, numerics, m, method="time_integration")
        return float(np.max(np.abs(d - ti)) / max(np.max(np.abs(d)), 1e-300))
    _run(report, "fano_route_agreement", numerics.crosscheck_rtol, fano_routes)

    if not inject_fault:
        def fano_scaling():
            worst = 0.0
            for ch, eta_key in (("A", "eta_a"), ("B", "eta_b")):
                eta = getattr(params, eta_key)
                if eta == 0:
                    raise DegenerateChannel(f"eta_{ch} = 0")
                half = params.replace(**{eta_key: eta / 2})
                q1 = st.fano_mandel(ch, math.inf, params, numerics, m) / eta
                q2 = st.fano_mandel(ch, math.inf, half, numerics) / (eta / 2)
                worst = max(worst, abs(q1 - q2))
            return worst
        _run(report, "fano_efficiency_scaling", 1e-8, fano_scaling)

        def inversion_invariance():
            i1 = st.atomic_inversion(params.replace(eta_a=1.0, eta_b=1.0), numerics)[1]
            i2 = st.atomic_inversion(params.replace(eta_a=0.3, eta_b=0.3), numerics)[1]
            return abs(i1 - i2)
        _run(report, "inversion_tilde_invariance", 1e-12, inversion_invariance)
    return report


MC_OBSERVABLES = ("P[A]", "n_A", "n_B", "t_AB", "t_BA", "I", "Q_B")


def analytic_value(name: str, params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS,
                   model: st.MaserModel | None = None, t: float | None = None) -> float:
    """Analytic counterpart of a :func:`trajectory.estimate` observable name."""
    m = model or st.MaserModel(params, numerics)
    if name.startswith("P[") and name.endswith("]"):
        return st.sequence_probability(name[2:-1], params, numerics, m).value
    if name in ("n_A", "n_B"):
        runs = st.mean_successive(params, numerics, m)
        return runs.n_a if name == "n_A" else runs.n_b
    if name in ("t_AA", "t_BB", "t_AB", "t_BA"):
        return st.waiting_time(name[2], name[3], params, numerics, m).value
    if name in ("t2_AA", "t2_BB"):
        return st.waiting_time_squared(name[-1], params, numerics, m).value
    if name == "I":
        return st.atomic_inversion(params, numerics, m)[0]
    if name == "I_tilde":
        return st.atomic_inversion(params, numerics, m)[1]
    if name in ("Q_A", "Q_B"):
        return st.fano_mandel(name[-1], t, params, numerics, m)
    raise ValueError(f"unknown observable {name!r}")


@dataclass
class McComparison:
    name: str
    analytic: float
    estimate: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.estimate - self.analytic) / self.stderr if self.stderr > 0 else math.inf


def _pool(estimates) -> tuple[float, float]:
    """Mean of equal-size replica estimates with their combined standard error."""
    means = np.array([e[0] for e in estimates])
    errs = np.array([e[1] for e in estimates])
    return float(means.mean()), float(math.sqrt((errs ** 2).sum()) / len(estimates))


def simulate_replicas(params: MaserParams, n_atoms: int, seeds) -> list[mc.DetectionRecord]:
    return [mc.simulate(params, n_atoms, seed) for seed in seeds]


def mc_compare(params: MaserParams, observables=MC_OBSERVABLES, n_atoms: int = 1_000_000,
               seeds=(12345,), numerics: Numerics = DEFAULT_NUMERICS, t: float = 1.0,
               records=None) -> list[McComparison]:
    m = st.MaserModel(params, numerics)
    if records is None:
        records = simulate_replicas(params, n_atoms, seeds)
    out = []
    for name in observables:
        est, err = _pool([mc.estimate(r, name, t=t) for r in records])
        out.append(McComparison(name, analytic_value(name, params, numerics, m, t), est, err))
    return out


def mc_checks(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS, n_atoms: int = 1_000_000,
              seeds=(12345,), report: VerifyReport | None = None, t: float = 1.0) -> VerifyReport:
    report = report or VerifyReport(params)
    m = st.MaserModel(params, numerics)
    records = simulate_replicas(params, n_atoms, seeds)
    for name in MC_OBSERVABLES:
        def z(name=name):
            try:
                est, err = _pool([mc.estimate(r, name, t=t) for r in records])
            except InsufficientData as exc:
                raise DegenerateChannel(str(exc)) from exc
            return abs(est - analytic_value(name, params, numerics, m, t)) / err if err > 0 else math.inf
        _run(report, f"mc_{name}", MC_SIGMAS, z, detail="(standard errors)")
    return report


def verify(params: MaserParams, numerics: Numerics = DEFAULT_NUMERICS, seeds=(12345,),
           n_atoms: int = 1_000_000, inject_fault: bool = False) -> VerifyReport:
    """Run the analytic suite, then (if ``n_atoms`` > 0) the Monte-Carlo comparison."""
    report = analytic_checks(params, numerics, inject_fault)
    if n_atoms > 0:
        if params.eta_a == 0 and params.eta_b == 0:
            report.checks.append(Check("mc_agreement", DEGENERATE, detail="no active detector"))
        else:
            mc_checks(params, numerics, n_atoms, seeds, report)
    return report
