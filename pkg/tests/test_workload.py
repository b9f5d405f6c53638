import pytest

from edgesim.errors import CyclicPipeline, InvalidWorkload, OrphanSubscription, ScenarioError, UnknownTaskInPipeline
from edgesim.workload import (
    FACE_WORK,
    TaskClass,
    load_scenario,
    validate_workload,
    workload_from_dict,
    workload_to_dict,
)

AIRPORT_TASKS = {"camera_driver", "lidar_driver", "display", "teleop_echo", "navigation",
                 "face_detect", "face_match", "personalization_responder"}


def _task(doc, tid):
    return next(t for t in doc["workload"]["tasks"] if t["id"] == tid)


def _pipeline(doc, pid):
    return next(p for p in doc["workload"]["pipelines"] if p["id"] == pid)


def test_builtin_tasks(workload):
    assert {t.id for t in workload.tasks} == AIRPORT_TASKS
    assert validate_workload(workload) == []


def test_face_pipeline_total_work(workload):
    pl = workload.pipeline("face_recognition")
    total = sum(workload.task(tid).work_per_request * frac for tid, frac in pl.stages)
    assert total == pytest.approx(2.354)
    assert FACE_WORK == pytest.approx(2.354)


def test_teleop_rate(workload):
    echo = workload.task("teleop_echo")
    assert all(workload.topic(t).publish_rate_hz == 1.0 for t in echo.publishes | echo.subscribes)


def test_navigation_class(workload):
    assert workload.task("navigation").task_class == TaskClass.LATENCY_CRITICAL


def test_anchor_iff_pinned(workload):
    for t in workload.tasks:
        assert (t.task_class == TaskClass.ANCHOR) == t.pinned_to_robot


def test_orphan_subscription(airport):
    _task(airport, "navigation")["subscribes"].append("ghost_topic")
    airport["workload"]["topics"].append({"name": "ghost_topic", "message_size_bytes": 1, "publish_rate_hz": 1})
    with pytest.raises(OrphanSubscription):
        load_scenario(airport)


def test_unknown_stage_task(airport):
    _pipeline(airport, "navigation")["stages"] = [{"task": "ghost", "fraction": 1.0}]
    with pytest.raises(UnknownTaskInPipeline):
        load_scenario(airport)


def test_fraction_sum(airport):
    _pipeline(airport, "face_recognition")["stages"] = [
        {"task": "face_detect", "fraction": 0.5}, {"task": "face_match", "fraction": 0.4}]
    problems = validate_workload(workload_from_dict(airport["workload"]))
    assert len(problems) == 1
    assert problems[0].kind == "InvalidPipeline"
    with pytest.raises(InvalidWorkload):
        load_scenario(airport)


def test_cyclic_stage_order(airport):
    airport["workload"]["pipelines"].append({
        "id": "backwards", "stages": [["face_match", 0.5], ["face_detect", 0.5]],
        "trigger_topic": "face_features", "response_topic": "face_features", "payload_bytes": 10})
    problems = [v for v in validate_workload(workload_from_dict(airport["workload"])) if v.kind == "CyclicPipeline"]
    assert len(problems) == 1
    with pytest.raises(CyclicPipeline):
        load_scenario(airport)


def test_pinned_non_anchor_reported(airport):
    _task(airport, "navigation")["pinned_to_robot"] = True
    kinds = [v.kind for v in validate_workload(workload_from_dict(airport["workload"]))]
    assert kinds == ["InconsistentClass"]


def test_self_loop_reported(airport):
    _task(airport, "navigation")["publishes"].append("scan")
    kinds = {v.kind for v in validate_workload(workload_from_dict(airport["workload"]))}
    assert "SelfLoop" in kinds


def test_malformed_section():
    with pytest.raises(ScenarioError):
        workload_from_dict({"tasks": [{"id": "x"}]})


def test_round_trip(workload):
    again = workload_from_dict(workload_to_dict(workload))
    assert again == workload
    assert workload_to_dict(again) == workload_to_dict(workload)


def test_timer_and_reactive_outputs(workload):
    assert workload.timer_outputs("camera_driver") == ["camera/image_raw", "face_event"]
    assert workload.timer_outputs("face_detect") == []
    assert workload.reactive_outputs("face_detect") == {"face_features"}
    assert workload.link_topic("face_detect", "face_match") == "face_features"
