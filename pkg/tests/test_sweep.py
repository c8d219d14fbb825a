import math

import numpy as np
import pytest

from micromaser import statistics as st
from micromaser.errors import InvalidParams
from micromaser.fockspace import phi_from_tint
from micromaser.sweep import (OBSERVABLES, SweepSpec, evaluate_point, format_csv, format_markers,
                              gauss_nodes, run_sweep, sweep_markers)

from conftest import BASE


def spec(**kw):
    base = dict(axis="phi", start=0.5, stop=3.0, points=6, params=BASE, observables=("inversion", "t_ab"))
    base.update(kw)
    return SweepSpec(**base)


@pytest.mark.parametrize("kw", [
    dict(start=3.0, stop=1.0), dict(points=1), dict(axis="omega"), dict(observables=("nope",)),
    dict(observables=()), dict(axis="t_int", coupling_g=None), dict(t_int_sigma=-1.0),
    dict(t_int_sigma=2.0, coupling_g=39.0, gauss_points=2),
])
def test_spec_validation(kw):
    with pytest.raises(InvalidParams):
        spec(**kw)


def test_unsmoothed_matches_direct_evaluation():
    result = run_sweep(spec())
    for x, row, status in zip(result.axis_values, result.rows, result.status):
        p = BASE.replace(phi=float(x))
        assert status == "ok"
        assert row["inversion"] == st.atomic_inversion(p)[0]
        assert row["t_ab"] == st.waiting_time("A", "B", p).value


def test_every_observable_evaluates():
    values, errors = evaluate_point(BASE, tuple(OBSERVABLES))
    assert not errors
    assert all(math.isfinite(v) for v in values.values())


def test_errors_are_recorded_not_raised():
    blind = BASE.replace(eta_a=0.0, eta_b=0.0)
    values, errors = evaluate_point(blind, ("inversion", "n_norm", "mean_photons"))
    assert math.isnan(values["inversion"]) and math.isfinite(values["mean_photons"])
    assert any(e.startswith("inversion:") for e in errors)
    result = run_sweep(spec(params=blind, observables=("inversion", "mean_photons")))
    assert all(s.startswith("error:") for s in result.status)


def test_gauss_nodes():
    t, w = gauss_nodes(50.0, 3.0, 9)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, t) == pytest.approx(50.0)
    assert np.dot(w, (t - 50.0) ** 2) == pytest.approx(9.0)
    t, w = gauss_nodes(2.0, 3.0, 9)   # negative nodes dropped
    assert np.all(t >= 0) and w.sum() == pytest.approx(1.0)


def test_averaging_suppresses_inversion_dips():
    kw = dict(axis="t_int", start=20.0, stop=120.0, points=41, coupling_g=39.0, observables=("inversion",))
    sharp = run_sweep(spec(**kw))
    smooth = run_sweep(spec(t_int_sigma=3.0, **kw))
    a = np.array([r["inversion"] for r in sharp.rows])
    b = np.array([r["inversion"] for r in smooth.rows])
    assert np.ptp(b) < np.ptp(a)
    assert np.abs(np.diff(b, 2)).max() < np.abs(np.diff(a, 2)).max()


def test_t_int_axis_uses_coupling():
    result = run_sweep(spec(axis="t_int", start=20.0, stop=30.0, points=2, coupling_g=39.0,
                            observables=("inversion",)))
    expected = st.atomic_inversion(BASE.replace(phi=phi_from_tint(30.0, 39.0)))[0]
    assert result.rows[-1]["inversion"] == pytest.approx(expected, rel=1e-12)


def test_markers():
    marks = sweep_markers(spec(start=2.0, stop=4.5, coupling_g=39.0))
    phis = [m["phi_rad"] for m in marks]
    assert all(2.0 <= p <= 4.5 for p in phis)
    assert any(m["n0"] == 0 and m["q"] == 1 for m in marks)   # pi
    text = format_markers(marks)
    assert text.splitlines()[0] == "n0,q,phi_rad,t_int_us"


def test_csv_layout_and_workers_identical():
    s = spec()
    one = format_csv(run_sweep(s, workers=1), ["test"])
    two = format_csv(run_sweep(s, workers=2), ["test"])
    assert one == two
    lines = one.splitlines()
    assert lines[0] == "# test"
    assert lines[1].startswith("# units: phi[rad]") and "t_ab[1/gamma]" in lines[1]
    assert lines[2] == "phi,inversion,t_ab,status"
    assert len(lines) == 3 + 6
    assert lines[3].endswith(",ok")


def test_averaged_csv_cells_are_plain_floats():
    s = spec(axis="t_int", start=30.0, stop=40.0, points=2, coupling_g=39.0, t_int_sigma=2.0)
    text = format_csv(run_sweep(s), [])
    for line in text.splitlines()[2:]:
        cells = line.split(",")[:-1]
        assert all(float(c) == float(c) for c in cells)   # parseable, not reprs of numpy scalars
