import json
from dataclasses import replace

import pytest

from edgesim.calibrate import (
    CalibrationTargets,
    FittedParams,
    calibrate,
    fit_capacity,
    fit_latency,
    invert_spd,
    load_targets,
    targets_from_dict,
    targets_to_dict,
)
from edgesim.errors import NonConvergence, NoRoot, TargetsError
from edgesim.kpi import symmetric_percent_difference as spd
from edgesim.placement import Policy
from edgesim.topology import build_topology, expected_transfer_ms
from edgesim.workload import builtin_airport_scenario


def test_invert_spd_round_trip():
    x = invert_spd(38.0, 183.548)
    # closed form of the same inversion: 38 (200 - s) / (200 + s)
    assert x == pytest.approx(38.0 * (200 - 183.548) / (200 + 183.548), abs=1e-6)
    assert x == pytest.approx(1.631, rel=1e-3)
    assert spd(38.0, x) == pytest.approx(183.548, abs=1e-3)


@pytest.mark.parametrize("bad", [0.0, 200.0, 250.0, -3.0])
def test_invert_spd_out_of_range(bad):
    with pytest.raises(NoRoot):
        invert_spd(38.0, bad)


def test_fit_latency_default(topo):
    edge, extra = fit_latency(CalibrationTargets(), topo)
    assert edge == pytest.approx(0.8155, abs=1e-3)
    # the fit leaves room for probe serialization on both hops
    ser = sum(64 * 8 / (topo.link(lid).bandwidth_mbps * 0.5 * 1e6) * 1000 for lid in ("robot-edge", "edge-cloud"))
    assert edge + extra + ser == pytest.approx(19.0, abs=1e-9)


def test_fit_latency_unreachable(topo):
    with pytest.raises(NoRoot):
        fit_latency(replace(CalibrationTargets(), edge_vs_cloud_spd_pct=250.0), topo)


def test_fitted_rtts_hit_targets(calibrated):
    t = build_topology(calibrated)
    assert 2 * expected_transfer_ms(t, "robot", "robot", 64) == pytest.approx(0.016)
    assert spd(38.0, 2 * expected_transfer_ms(t, "robot", "edge", 64)) == pytest.approx(183.548, abs=1e-3)
    assert 2 * expected_transfer_ms(t, "robot", "cloud", 64) == pytest.approx(38.0, rel=1e-5)


def test_capacities(fitted):
    assert fitted.edge_capacity == pytest.approx(3.950, abs=1e-3)
    assert fitted.cloud_capacity == pytest.approx(4.010, abs=1e-3)
    assert fitted.image_payload_bytes == 200_000


def test_residual_bounded(fitted):
    assert 0 < fitted.residual <= 0.15
    for name in ("edge_one_way_ms", "cloud_extra_one_way_ms", "internet_bandwidth_mbps",
                 "display_overhead_ms", "feature_payload_bytes"):
        assert getattr(fitted, name) > 0


def test_deterministic(fitted):
    assert calibrate(CalibrationTargets(), builtin_airport_scenario()) == fitted


def test_apply_params(fitted, calibrated):
    t = build_topology(calibrated)
    assert t.node("edge").capacity_per_core == fitted.edge_capacity
    assert t.link("edge-cloud").bandwidth_mbps == fitted.internet_bandwidth_mbps
    assert calibrated["simulation"]["display_overhead_ms"] == fitted.display_overhead_ms
    sizes = {tp["name"]: tp["message_size_bytes"] for tp in calibrated["workload"]["topics"]}
    assert sizes["face_features"] == fitted.feature_payload_bytes


def test_params_file_round_trip(fitted, tmp_path):
    path = tmp_path / "fp.json"
    fitted.save(path)
    assert FittedParams.load(path) == fitted


def test_targets_file_round_trip(tmp_path):
    path = tmp_path / "targets.json"
    path.write_text(json.dumps(targets_to_dict(CalibrationTargets())))
    assert load_targets(path) == CalibrationTargets()


def test_response_below_recognition_rejected():
    d = targets_to_dict(CalibrationTargets())
    d["response_times"]["edge"] = [596, 500]
    with pytest.raises(TargetsError):
        targets_from_dict(d)


def test_unknown_policy_rejected():
    with pytest.raises(TargetsError):
        targets_from_dict({"response_times": {"mars": [1, 2]}})


def test_impossible_targets_do_not_converge():
    tg = CalibrationTargets()
    rows = dict(tg.response_times)
    # a hybrid row far faster than the compute allows
    rows[Policy.HYBRID] = (50.0, 5000.0)
    with pytest.raises(NonConvergence) as info:
        fit_capacity(replace(tg, response_times=rows), builtin_airport_scenario())
    assert info.value.residual > 0.15
