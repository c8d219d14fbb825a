"""Monte-Carlo detection records for the standard micromaser.

Because the cavity field stays diagonal, a trajectory is a classical jump
process on the photon number ``n``:

* atoms arrive as a Poisson process of unit rate (time in units of ``1/r``);
* between arrivals the field performs a birth-death walk with rates
  ``(nu + 1) n / N_ex`` (loss) and ``nu (n + 1) / N_ex`` (thermal gain),
  sampled exactly with the Gillespie algorithm;
* an arriving atom leaves in the lower level (and adds a photon) with
  probability ``sin^2(phi sqrt(n + 1))``, otherwise it leaves excited;
* an exiting atom is detected with the efficiency of its level's detector.

None of this touches the master-equation or resolvent code paths.

Random numbers come from NumPy's PCG64 generator.  Seeding rule: the integer
``seed`` feeds ``numpy.random.SeedSequence(seed)``, whose two spawned children
drive (1) the per-atom stream -- arrival gaps, emission and detection
uniforms, drawn in that order for the whole run -- and (2) the damping stream,
consumed in fixed chunks of ``DAMPING_CHUNK`` exponentials and uniforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientData, InvalidParams
from .fockspace import MaserParams

UNDETECTED, DETECTED_A, DETECTED_B = 0, 1, 2
OUTCOME_NAMES = {UNDETECTED: "undetected", DETECTED_A: "detected_A", DETECTED_B: "detected_B"}
DAMPING_CHUNK = 1 << 16
N_CAP = 2000
MIN_EVENTS = 100


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """Every simulated atom passage, in arrival order.

    ``times`` are arrival times in units of 1/r, ``outcomes`` hold
    UNDETECTED / DETECTED_A / DETECTED_B, ``n_before`` the photon number the
    atom met on entry and ``emitted`` whether it left in the lower level.
    """

    params: MaserParams
    seed: int
    times: np.ndarray
    outcomes: np.ndarray
    n_before: np.ndarray
    emitted: np.ndarray
    overflow: int = 0

    @property
    def n_atoms(self) -> int:
        return self.times.size

    @property
    def events(self):
        return [(float(t), OUTCOME_NAMES[int(o)]) for t, o in zip(self.times, self.outcomes)]

    def dump(self, path) -> None:
        """Write one ``time outcome`` line per atom (time in units of 1/r)."""
        with open(Path(path), "w") as fh:
            fh.write(f"# seed={self.seed} n_atoms={self.n_atoms} time_unit=1/r\n")
            for t, o in zip(self.times.tolist(), self.outcomes.tolist()):
                fh.write(f"{t!r} {OUTCOME_NAMES[o]}\n")


def simulate(params: MaserParams, n_atoms: int, seed: int, burn_in: int | None = None) -> DetectionRecord:
    """Simulate ``n_atoms`` recorded passages after a discarded burn-in from the vacuum."""
    if n_atoms < 1:
        raise InvalidParams("n_atoms must be at least 1")
    if burn_in is None:
        burn_in = max(2000, int(200 * params.n_ex))
    total = n_atoms + burn_in
    atom_ss, damp_ss = np.random.SeedSequence(seed).spawn(2)
    atom_rng = np.random.Generator(np.random.PCG64(atom_ss))
    damp_rng = np.random.Generator(np.random.PCG64(damp_ss))
    gaps = atom_rng.standard_exponential(total).tolist()
    u_emit = atom_rng.random(total).tolist()
    u_det = atom_rng.random(total).tolist()

    n_idx = np.arange(N_CAP + 1, dtype=float)
    emit_p = (np.sin(params.phi * np.sqrt(n_idx + 1.0)) ** 2).tolist()
    down = ((params.nu + 1.0) * n_idx / params.n_ex).tolist()
    tot = (((params.nu + 1.0) * n_idx + params.nu * (n_idx + 1.0)) / params.n_ex).tolist()
    eta_a, eta_b = params.eta_a, params.eta_b

    times = np.empty(total)
    outcomes = np.empty(total, dtype=np.int8)
    n_before = np.empty(total, dtype=np.int32)
    emitted = np.empty(total, dtype=bool)

    d_exp = damp_rng.standard_exponential(DAMPING_CHUNK).tolist()
    d_uni = damp_rng.random(DAMPING_CHUNK).tolist()
    di = 0
    n = 0
    t = 0.0
    overflow = 0
    for k in range(total):
        remaining = gaps[k]
        while True:
            rate = tot[n]
            if rate == 0.0:
                break
            if di == DAMPING_CHUNK:
                d_exp = damp_rng.standard_exponential(DAMPING_CHUNK).tolist()
                d_uni = damp_rng.random(DAMPING_CHUNK).tolist()
                di = 0
            dt = d_exp[di] / rate
            if dt >= remaining:
                di += 1
                break
            remaining -= dt
            if d_uni[di] * rate < down[n]:
                n -= 1
            elif n < N_CAP:
                n += 1
            else:
                overflow += 1
            di += 1
        t += gaps[k]
        times[k] = t
        n_before[k] = n
        if u_emit[k] < emit_p[n]:
            emitted[k] = True
            outcomes[k] = DETECTED_B if u_det[k] < eta_b else UNDETECTED
            if n < N_CAP:
                n += 1
            else:
                overflow += 1
        else:
            emitted[k] = False
            outcomes[k] = DETECTED_A if u_det[k] < eta_a else UNDETECTED
    sl = slice(burn_in, None)
    return DetectionRecord(params, seed, times[sl].copy(), outcomes[sl].copy(), n_before[sl].copy(),
                           emitted[sl].copy(), overflow)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def batch_means(samples: np.ndarray, n_batches: int = 100) -> tuple[float, float]:
    """Sample mean with a non-overlapping batch-means standard error."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < MIN_EVENTS:
        raise InsufficientData(f"only {samples.size} samples (need {MIN_EVENTS})")
    n_batches = max(30, min(n_batches, samples.size // 3))
    size = samples.size // n_batches
    means = samples[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(samples.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def _detected(record: DetectionRecord) -> tuple[np.ndarray, np.ndarray]:
    mask = record.outcomes != UNDETECTED
    return record.outcomes[mask], record.times[mask]


def _run_lengths(seq: np.ndarray, letter: int) -> np.ndarray:
    """Lengths of maximal runs of ``letter``, dropping runs cut by the record ends."""
    hit = np.concatenate([[0], (seq == letter).astype(np.int8), [0]])
    edges = np.diff(hit)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    lengths = ends - starts
    keep = (starts > 0) & (ends < seq.size)
    return lengths[keep]


def _next_wait(start_times: np.ndarray, target_times: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(target_times, start_times, side="right")
    ok = idx < target_times.size
    return target_times[idx[ok]] - start_times[ok]


def _fano(record: DetectionRecord, letter: int, tau: float, n_batches: int) -> tuple[float, float]:
    t_det = record.times[record.outcomes == letter]
    t0, t1 = record.times[0], record.times[-1]
    n_win = int((t1 - t0) // tau)
    if n_win < MIN_EVENTS:
        raise InsufficientData(f"only {n_win} counting windows")
    edges = t0 + tau * np.arange(n_win + 1)
    counts, _ = np.histogram(t_det, bins=edges)
    mean = counts.mean()
    if mean == 0:
        raise InsufficientData("no counts")
    # per-window contribution whose average is the global Q estimate
    contrib = (counts - mean) ** 2 / mean - 1.0
    n_batches = max(30, min(n_batches, n_win // 3))
    size = n_win // n_batches
    means = contrib[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(contrib.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


_LETTER = {"A": DETECTED_A, "B": DETECTED_B}


def estimate(record: DetectionRecord, observable: str, t: float | None = None,
             n_batches: int = 100) -> tuple[float, float]:
    """Point estimate and standard error of a named observable.

    Observables: ``P[A]``, ``P[B]``, ``P[<seq>]`` (length <= 3), ``n_A``, ``n_B``,
    ``t_AA``, ``t_BB``, ``t_AB``, ``t_BA``, ``t2_AA``, ``t2_BB``, ``I``,
    ``I_tilde``, ``Q_A`` and ``Q_B`` (which need the window length ``t``).
    Times are in the record's reporting unit.
    """
    params = record.params
    tscale = params.time_scale
    seq, det_times = _detected(record)
    if observable.startswith("P[") and observable.endswith("]"):
        word = observable[2:-1]
        if not word or len(word) > 3 or set(word) - {"A", "B"}:
            raise InvalidParams(f"unsupported sequence observable {observable!r}")
        codes = np.array([_LETTER[ch] for ch in word], dtype=np.int8)
        L = codes.size
        if seq.size < L:
            raise InsufficientData("record too short")
        windows = np.lib.stride_tricks.sliding_window_view(seq, L)
        return batch_means(np.all(windows == codes, axis=1), n_batches)
    if observable in ("n_A", "n_B"):
        return batch_means(_run_lengths(seq, _LETTER[observable[-1]]), n_batches)
    if observable in ("t_AA", "t_BB", "t_AB", "t_BA", "t2_AA", "t2_BB"):
        power = 2 if observable.startswith("t2") else 1
        start, target = observable[-2], observable[-1]
        waits = _next_wait(det_times[seq == _LETTER[start]], det_times[seq == _LETTER[target]])
        return batch_means((waits * tscale) ** power, n_batches)
    if observable == "I":
        signed = np.where(record.outcomes == DETECTED_B, 1.0,
                          np.where(record.outcomes == DETECTED_A, -1.0, 0.0))
        return batch_means(signed, n_batches)
    if observable == "I_tilde":
        return batch_means(np.where(seq == DETECTED_B, 1.0, -1.0), n_batches)
    if observable in ("Q_A", "Q_B"):
        if t is None or not t > 0:
            raise InvalidParams("Q estimates need a positive window length t")
        return _fano(record, _LETTER[observable[-1]], params.to_internal_time(t), n_batches)
    raise InvalidParams(f"unknown observable {observable!r}")
