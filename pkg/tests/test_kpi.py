import pytest

from edgesim.errors import BothZero, EmptySamples, IoFailure, MissingPolicy, NoUtilizationSamples
from edgesim.kpi import (
    LatencyReport,
    LoadReport,
    ResponseReport,
    export_csv,
    read_csv,
    render_report,
    robot_load,
    summarize,
    symmetric_percent_difference as spd,
)
from edgesim.placement import Placement, Policy, place
from edgesim.simcore import run_simulation
from edgesim.workload import Workload

FOUR = (Policy.LOCAL, Policy.EDGE_ONLY, Policy.CLOUD_ONLY, Policy.HYBRID)


def test_summarize_small():
    s = summarize([1, 2, 3, 4, 5])
    assert (s.mean, s.p50, s.min, s.max) == (3, 3, 1, 5)


def test_summarize_singleton():
    s = summarize([7])
    assert {s.mean, s.p50, s.p95, s.p99, s.min, s.max} == {7}


def test_summarize_empty():
    with pytest.raises(EmptySamples):
        summarize([])


def test_nearest_rank():
    s = summarize(range(1, 101))
    assert (s.p50, s.p95, s.p99) == (50, 95, 99)


def test_spd_quoted_figures():
    assert spd(38, 0.016) == pytest.approx(199.832, abs=1e-3)
    assert spd(2383, 684) == pytest.approx(110.792, abs=1e-3)
    assert spd(5.5, 5.5) == 0.0


def test_spd_inversion_closed_form():
    # spd(a, x) = s with x < a solves to x = a(200 - s)/(200 + s)
    x = 38 * (200 - 183.548) / (200 + 183.548)
    assert x == pytest.approx(1.630, abs=1e-3)
    assert spd(38, x) == pytest.approx(183.548, abs=1e-9)


def test_spd_both_zero():
    with pytest.raises(BothZero):
        spd(0, 0)


def test_robot_load_baseline_only(topo):
    anchors_only = Workload((), (), ())
    trace = run_simulation(anchors_only, topo, Placement({}, Policy.LOCAL), None, 20_000, 1)
    low, high, mem = robot_load(trace)
    assert low == high == pytest.approx(topo.robot.baseline_load_fraction * 100)
    assert mem == pytest.approx(0.2)


def test_robot_load_needs_samples(workload, topo):
    from edgesim.simcore import SimConfig

    trace = run_simulation(workload, topo, place(Policy.LOCAL, workload, topo), None, 500, 1,
                           SimConfig(sample_interval_ms=1000))
    with pytest.raises(NoUtilizationSamples):
        robot_load(trace)


def _reports():
    lat = LatencyReport({p: summarize([1.0 + i, 2.0 + i, 3.5 + i]) for i, p in enumerate(FOUR)})
    load = LoadReport({p: (10.0 + i, 20.0 + i, 0.51) for i, p in enumerate(FOUR)})
    resp = ResponseReport({p: (500.0 + i, 600.0 + i) for i, p in enumerate(FOUR)})
    return lat, load, resp


def test_export_response_lines(tmp_path):
    _, _, resp = _reports()
    path = tmp_path / "response.csv"
    export_csv(resp, path)
    assert len(path.read_text().splitlines()) == 5
    first = path.read_bytes()
    export_csv(resp, path)
    assert path.read_bytes() == first


def test_export_round_trip(tmp_path):
    lat, load, _ = _reports()
    export_csv(lat, tmp_path / "lat.csv")
    rows = read_csv(tmp_path / "lat.csv")
    assert [r["policy"] for r in rows] == [p.value for p in FOUR]
    for r, (_, s) in zip(rows, lat.rows.items()):
        assert float(r["mean_ms"]) == pytest.approx(s.mean, abs=5e-4)
        assert float(r["p95_ms"]) == pytest.approx(s.p95, abs=5e-4)
    export_csv(load, tmp_path / "load.csv")
    assert list(read_csv(tmp_path / "load.csv")[0]) == list(LoadReport.header)


def test_export_unwritable(tmp_path):
    _, _, resp = _reports()
    with pytest.raises(IoFailure):
        export_csv(resp, tmp_path / "missing" / "dir" / "x.csv")


def test_render_structure():
    lat, load, resp = _reports()
    text = render_report(lat, load, resp)
    assert text == render_report(lat, load, resp)
    for table in text.split("\n\n")[0:1] + text.split("\n\n")[2:4]:
        rows = [ln for ln in table.splitlines() if ln.startswith("| ") and "Setting" not in ln]
        assert len(rows) == 4


def test_render_optional_oracle_required_local():
    lat, load, resp = _reports()
    render_report(lat, load, resp)  # no oracle row
    del lat.rows[Policy.LOCAL]
    with pytest.raises(MissingPolicy):
        render_report(lat, load, resp)
    assert "local" not in render_report(lat, load, resp, require_all=False).split("\n\n")[0]
