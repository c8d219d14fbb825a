"""Command-line front end.

Settings come from built-in defaults, then an optional flat ``key=value`` file
(``--config``), then command-line flags.  ``--dump-config`` prints the merged
result in the same file format.  Exit codes: 0 success, 1 numerical failure,
2 invalid configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from . import statistics as st
from .errors import InvalidParams, MicromaserError
from .fockspace import MaserParams, phi_from_tint
from .settings import Numerics
from .steady import steady_state
from .sweep import (OBSERVABLES, PointContext, SweepSpec, _fmt, evaluate_point, format_csv,
                    format_markers, run_sweep, unit_labels)
from .verify import MC_OBSERVABLES, MC_SIGMAS, mc_compare, simulate_replicas, verify

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
EXECUTION_KEYS = ("workers",)

POINT_OBSERVABLES = {
    "inversion": ("r_a", "r_b", "p_a", "p_b", "inversion", "inversion_tilde"),
    "fano": ("q_a_inf", "q_b_inf", "q_a_inf_scaled", "q_b_inf_scaled", "q_a_t", "q_b_t", "q_b_avg"),
    "runs": ("gamma", "n_a", "n_b", "n_mean", "n_norm"),
    "waiting": ("t_aa", "t_bb", "t_ab", "t_ba", "t_ab_norm", "t_ba_norm",
                "t2_aa", "t2_bb", "t2_aa_norm", "t2_bb_norm"),
}


@dataclass
class RunConfig:
    nex: float = 7.0
    nu: float = 0.054
    phi: float = 1.0
    tint_us: float | None = None    # overrides phi when set
    g_khz: float = 39.0
    eta_a: float = 0.4
    eta_b: float = 0.4
    time_unit: str = "cavity_decay"
    # numerics
    nmax_cap: int = 400
    tail_tol: float = 1e-12
    ss_tol: float = 1e-10
    tol: float = 1e-10              # integrator relative tolerance
    ode_atol: float = 1e-15
    fixed_step: float = 0.0
    method: str = "direct_solve"
    crosscheck_rtol: float = 1e-7
    horizon_start: float = 16.0
    horizon_max: float = 1e7
    # sweeps
    axis: str = "phi"
    start: float = 0.1
    stop: float = 10.0
    points: int = 200
    observables: str = "inversion,inversion_tilde"
    sigma_tint_us: float = 0.0
    gauss_points: int = 9
    n0_max: int = 4
    workers: int = 1
    # Fano-Mandel observation times, reporting units
    t_obs: float = 1.0
    t_avg_lo: float = 1.0
    t_avg_hi: float = 4.0
    t_avg_points: int = 16
    # sequences
    seq: str = ""
    length: int = 3
    # Monte Carlo
    seed: int = 12345
    replicas: int = 1
    atoms: int = 1_000_000

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def set(self, key: str, raw) -> None:
        key = key.strip().replace("-", "_")
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise InvalidParams(f"unknown config key {key!r}")
        if not isinstance(raw, str):
            setattr(self, key, raw)
            return
        raw = raw.strip()
        kind = types[key]
        try:
            if "None" in kind:
                value = None if raw.lower() in ("", "none") else float(raw)
            elif kind == "int":
                value = int(raw)
            elif kind == "float":
                value = float(raw)
            else:
                value = raw
        except ValueError as exc:
            raise InvalidParams(f"bad value for {key}: {raw!r}") from exc
        setattr(self, key, value)

    def load(self, path) -> None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParams(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            self.set(key, value)

    def dump(self) -> str:
        return "".join(f"{k}={'none' if v is None else v}\n" for k, v in dataclasses.asdict(self).items())

    def params(self) -> MaserParams:
        phi = self.phi if self.tint_us is None else phi_from_tint(self.tint_us, self.g_khz)
        return MaserParams(self.nex, self.nu, phi, self.eta_a, self.eta_b, self.time_unit)

    def numerics(self) -> Numerics:
        return Numerics(n_max_cap=self.nmax_cap, tail_tol=self.tail_tol, ss_tol=self.ss_tol,
                        ode_rtol=self.tol, ode_atol=self.ode_atol, fixed_step=self.fixed_step,
                        method=self.method, crosscheck_rtol=self.crosscheck_rtol,
                        horizon_start=self.horizon_start, horizon_max=self.horizon_max)

    def context(self) -> PointContext:
        return PointContext(self.t_obs, self.t_avg_lo, self.t_avg_hi, self.t_avg_points)

    def seeds(self) -> list[int]:
        if self.replicas < 1:
            raise InvalidParams("replicas must be at least 1")
        return [self.seed + i for i in range(self.replicas)]

    def header(self, command: str) -> list[str]:
        # execution-only keys stay out so output is independent of them
        lines = [f"micromaser {__version__} {command}"]
        lines += [f"config {line}" for line in self.dump().splitlines()
                  if line.split("=", 1)[0] not in EXECUTION_KEYS]
        return lines


# flag -> (config key, type, help)
FLAGS = {
    "--nex": ("nex", float, "mean number of atoms per cavity lifetime"),
    "--nu": ("nu", float, "thermal photon number"),
    "--phi": ("phi", float, "Rabi angle (rad)"),
    "--tint": ("tint_us", float, "interaction time in microseconds (needs --g-khz)"),
    "--g-khz": ("g_khz", float, "atom-field coupling in kHz"),
    "--eta-a": ("eta_a", float, "upper-state detector efficiency"),
    "--eta-b": ("eta_b", float, "lower-state detector efficiency"),
    "--time-unit": ("time_unit", str, "cavity_decay (1/gamma) or atom_injection (1/r)"),
    "--nmax-cap": ("nmax_cap", int, "upper bound on the photon-number cutoff"),
    "--tol": ("tol", float, "integrator relative tolerance"),
    "--fixed-step": ("fixed_step", float, "fixed RK4 step in units of 1/r (0 = adaptive)"),
    "--method": ("method", str, "direct_solve, time_integration or both"),
    "--seed": ("seed", int, "Monte-Carlo seed"),
    "--replicas": ("replicas", int, "independent Monte-Carlo replicas (seeds seed, seed+1, ...)"),
    "--atoms": ("atoms", int, "simulated atoms per replica"),
    "--sigma-tint-us": ("sigma_tint_us", float, "Gaussian spread of the interaction time (us)"),
    "--gauss-points": ("gauss_points", int, "quadrature nodes for interaction-time averaging"),
    "--axis": ("axis", str, "sweep axis: phi or t_int"),
    "--start": ("start", float, "sweep start"),
    "--stop": ("stop", float, "sweep stop"),
    "--points": ("points", int, "sweep grid points"),
    "--observables": ("observables", str, "comma-separated observable names"),
    "--workers": ("workers", int, "worker processes for sweeps"),
    "--t-obs": ("t_obs", float, "Fano-Mandel observation time (reporting units)"),
    "--seq": ("seq", str, "detection sequence, e.g. ABA"),
    "--length": ("length", int, "list every sequence of this length"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value settings file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    for flag, (key, kind, help_) in FLAGS.items():
        common.add_argument(flag, dest=key, type=kind, default=argparse.SUPPRESS, help=help_)
    common.add_argument("--eta", type=float, default=argparse.SUPPRESS, help="set both efficiencies")
    common.add_argument("--out", help="write CSV here instead of stdout")
    common.add_argument("--dump-config", action="store_true", help="print the merged config and exit")

    parser = argparse.ArgumentParser(prog="micromaser", description="Micromaser detection statistics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("steady", parents=[common], help="steady-state photon distribution")
    sub.add_parser("inversion", parents=[common], help="detection rates and atomic inversion")
    sub.add_parser("fano", parents=[common], help="Fano-Mandel Q for both detectors")
    sub.add_parser("runs", parents=[common], help="mean runs of successive like detections")
    sub.add_parser("waiting", parents=[common], help="mean waiting times between detections")
    sub.add_parser("sequence", parents=[common], help="detection-sequence probabilities")
    sp = sub.add_parser("sweep", parents=[common], help="sweep phi or t_int, one CSV row per point")
    sp.add_argument("--markers", help="trapping-state marker file (default: <out>.markers.csv)")
    mp = sub.add_parser("mc-verify", parents=[common], help="compare analytic values with Monte Carlo")
    mp.add_argument("--events", help="dump the first replica's detection record (one 'time outcome' per line)")
    vp = sub.add_parser("verify", parents=[common], help="run the identity and oracle suite")
    vp.add_argument("--inject-fault", action="store_true", help="perturb the steady state (negative control)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg.load(args.config)
    for item in args.set:
        if "=" not in item:
            raise InvalidParams(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(*item.split("=", 1))
    for key in cfg.field_names():
        if key in vars(args):
            cfg.set(key, getattr(args, key))
    if "eta" in vars(args):
        cfg.eta_a = cfg.eta_b = args.eta
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _header(buf: io.StringIO, lines: list[str]) -> None:
    for line in lines:
        buf.write(f"# {line}\n")


def cmd_steady(cfg: RunConfig, args) -> int:
    params = cfg.params()
    ss = steady_state(params, cfg.numerics())
    buf = io.StringIO()
    _header(buf, cfg.header("steady") + [f"n_max={ss.n_max}", f"residual={ss.residual!r}",
                                         f"mean_photons={ss.mean_photon_number()!r}"])
    buf.write("n,p_n\n")
    for n, p in enumerate(ss.weights):
        buf.write(f"{n},{float(p)!r}\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_point(cfg: RunConfig, args) -> int:
    params = cfg.params()
    names = POINT_OBSERVABLES[args.command]
    values, errors = evaluate_point(params, names, cfg.numerics(), cfg.context())
    labels = unit_labels(params)
    buf = io.StringIO()
    _header(buf, cfg.header(args.command)
            + ["units: phi[rad] " + " ".join(f"{o}[{labels[OBSERVABLES[o][0]]}]" for o in names)])
    buf.write(",".join(("phi",) + names + ("status",)) + "\n")
    status = "ok" if not errors else "error:" + ";".join(errors)
    buf.write(",".join([_fmt(params.phi)] + [_fmt(values[o]) for o in names] + [status]) + "\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if not errors else EXIT_NUMERICAL


def cmd_sequence(cfg: RunConfig, args) -> int:
    params = cfg.params()
    numerics = cfg.numerics()
    seqs = [cfg.seq] if cfg.seq else st.all_sequences(cfg.length)
    model = st.MaserModel(params, numerics)
    buf = io.StringIO()
    _header(buf, cfg.header("sequence"))
    buf.write("sequence,probability\n")
    for s in seqs:
        buf.write(f"{s},{st.sequence_probability(s, params, numerics, model).value!r}\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    names = tuple(o.strip() for o in cfg.observables.split(",") if o.strip())
    spec = SweepSpec(axis=cfg.axis, start=cfg.start, stop=cfg.stop, points=cfg.points, params=cfg.params(),
                     observables=names, coupling_g=cfg.g_khz, t_int_sigma=cfg.sigma_tint_us,
                     gauss_points=cfg.gauss_points, context=cfg.context(), n0_max=cfg.n0_max)
    if cfg.workers < 1:
        raise InvalidParams("workers must be at least 1")
    result = run_sweep(spec, cfg.numerics(), cfg.workers)
    _emit(format_csv(result, cfg.header("sweep")), args.out)
    markers = args.markers or (f"{args.out}.markers.csv" if args.out else None)
    if markers:
        Path(markers).write_text(format_markers(result.markers))
    return EXIT_OK


def cmd_mc_verify(cfg: RunConfig, args) -> int:
    params = cfg.params()
    records = simulate_replicas(params, cfg.atoms, cfg.seeds())
    if args.events:
        records[0].dump(args.events)
    rows = mc_compare(params, MC_OBSERVABLES, cfg.atoms, cfg.seeds(), cfg.numerics(), cfg.t_obs, records)
    buf = io.StringIO()
    _header(buf, cfg.header("mc-verify"))
    buf.write("observable,analytic,estimate,stderr,z,status\n")
    ok = True
    for r in rows:
        good = abs(r.z) <= MC_SIGMAS
        ok &= good
        buf.write(f"{r.name},{r.analytic!r},{r.estimate!r},{r.stderr!r},{r.z:.3f},{'pass' if good else 'fail'}\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_verify(cfg: RunConfig, args) -> int:
    report = verify(cfg.params(), cfg.numerics(), cfg.seeds(), cfg.atoms, args.inject_fault)
    text = "\n".join(report.lines()) + "\n"
    n_fail = sum(c.status == "fail" for c in report.checks)
    text += f"{'OK' if report.ok else 'FAILED'}: {len(report.checks)} checks, {n_fail} failed\n"
    _emit(text, args.out)
    return EXIT_OK if report.ok else EXIT_NUMERICAL


COMMANDS = {
    "steady": cmd_steady, "inversion": cmd_point, "fano": cmd_point, "runs": cmd_point,
    "waiting": cmd_point, "sequence": cmd_sequence, "sweep": cmd_sweep,
    "mc-verify": cmd_mc_verify, "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        cfg.params()
        cfg.numerics()
        return COMMANDS[args.command](cfg, args)
    except (InvalidParams, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MicromaserError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
