"""Monitoring loop tests: triggers, cooldown, retraining, failure isolation."""

from __future__ import annotations

import json

import pytest

from smartmlops.drift import DriftThresholds
from smartmlops.errors import MonitorError
from smartmlops.harness import (
    DriftEvent,
    ScenarioConfig,
    bootstrap_closed_loop,
    generate_scenario,
    sabotage_pipeline,
)
from smartmlops.monitor import MonitorConfig, MonitorEngine, write_monitor_outputs
from smartmlops.validation import Dataset


def flip_scenario(batch_count=14, flip_at=7, rows=800, seed=11):
    return ScenarioConfig(
        seed=seed,
        n_features=2,
        rows_per_batch=rows,
        batch_count=batch_count,
        drift_events=(DriftEvent(batch=flip_at, kind="concept_flip", magnitude=1.0),),
    )


def shift_scenario(batch_count=8, shift_at=4, rows=800, seed=13, magnitude=3.0):
    return ScenarioConfig(
        seed=seed,
        n_features=2,
        rows_per_batch=rows,
        batch_count=batch_count,
        drift_events=(DriftEvent(batch=shift_at, kind="mean_shift", magnitude=magnitude),),
    )


def test_closed_loop_retrains_and_promotes(tmp_path):
    setup = bootstrap_closed_loop(flip_scenario(), tmp_path, cooldown=3, recent_batches=1)
    pre_drift_accuracy = setup.registry.get(setup.monitor_config.model_name).metrics["accuracy"]
    result = setup.engine.run(setup.data.batches)

    kinds = result.event_kinds()
    assert "retrain_triggered" in kinds
    assert "retrain_completed" in kinds
    assert "model_promoted" in kinds

    trigger_batch = next(e.batch_index for e in result.events if e.kind == "retrain_triggered")
    assert 7 <= trigger_batch <= 8  # within 2 batches of the flip

    name = setup.monitor_config.model_name
    assert setup.registry.production_version(name) > setup.initial_version
    post_accuracy = setup.registry.get(name).metrics["accuracy"]
    assert abs(post_accuracy - pre_drift_accuracy) <= 0.05

    # accuracy recovered on post-retrain batches
    tail = [s.accuracy for s in result.samples if s.batch_index > trigger_batch + 1]
    assert all(a >= 0.9 for a in tail)


def test_production_version_nondecreasing_and_replay(tmp_path):
    setup = bootstrap_closed_loop(flip_scenario(seed=21), tmp_path)
    result = setup.engine.run(setup.data.batches)
    name = setup.monitor_config.model_name

    versions = [setup.initial_version]
    for ev in result.events:
        if ev.kind == "model_promoted":
            versions.append(int(ev.detail.split("v")[-1].split()[0]))
    assert versions == sorted(versions)
    assert setup.registry.production_version(name) == versions[-1]

    replayed = setup.registry.replay_events(name)
    assert replayed["production"] == versions[-1]
    assert replayed["stages"] == {mv.version: mv.stage for mv in setup.registry.list(name)}


def test_no_drift_stream_emits_no_retrains(tmp_path):
    scenario = ScenarioConfig(seed=3, n_features=2, rows_per_batch=1500, batch_count=8)
    setup = bootstrap_closed_loop(scenario, tmp_path)
    result = setup.engine.run(setup.data.batches)
    assert "retrain_triggered" not in result.event_kinds()
    assert "drift_flagged" not in result.event_kinds()
    assert setup.registry.production_version(setup.monitor_config.model_name) == setup.initial_version


def test_sabotaged_retrain_keeps_old_production(tmp_path):
    setup = bootstrap_closed_loop(flip_scenario(seed=31), tmp_path)
    sabotage_pipeline(setup.pipeline_path)
    result = setup.engine.run(setup.data.batches)

    kinds = result.event_kinds()
    assert "retrain_triggered" in kinds
    assert "retrain_failed" in kinds
    assert "model_promoted" not in kinds
    name = setup.monitor_config.model_name
    assert setup.registry.production_version(name) == setup.initial_version


def test_cooldown_suppresses_repeat_triggers(tmp_path):
    # persistent drift + failing pipeline: triggers keep wanting to fire,
    # cooldown must space them out
    setup = bootstrap_closed_loop(flip_scenario(batch_count=14, flip_at=4, seed=41),
                                  tmp_path, cooldown=3)
    sabotage_pipeline(setup.pipeline_path)
    result = setup.engine.run(setup.data.batches)

    kinds = result.event_kinds()
    assert "cooldown_suppressed" in kinds
    triggers = [e.batch_index for e in result.events if e.kind == "retrain_triggered"]
    assert len(triggers) >= 2
    assert all(b - a > 3 for a, b in zip(triggers, triggers[1:]))
    completions = [e.batch_index for e in result.events if e.kind == "retrain_completed"]
    assert completions == []


def test_drift_score_is_max_per_feature_psi(tmp_path):
    setup = bootstrap_closed_loop(shift_scenario(), tmp_path)
    result = setup.engine.run(setup.data.batches)
    for sample in result.samples:
        assert sample.drift_score == max(sample.per_feature_psi.values())


def test_psi_path_triggers_without_labels(tmp_path):
    scenario = shift_scenario(seed=17)
    setup = bootstrap_closed_loop(scenario, tmp_path)
    config = MonitorConfig(
        model_name=setup.monitor_config.model_name,
        features=setup.monitor_config.features,
        retrain_pipeline=str(setup.pipeline_path),
        dataset_id=setup.monitor_config.dataset_id,
        thresholds=DriftThresholds(),
        labels_available=False,
        cooldown=2,
        seed=scenario.seed,
    )
    engine = MonitorEngine(config, tmp_path / "store", tmp_path / "session2")
    result = engine.run(setup.data.batches)
    kinds = result.event_kinds()
    assert "drift_flagged" in kinds
    assert "retrain_triggered" in kinds
    assert all(s.accuracy is None and s.posterior is None for s in result.samples)


def test_validation_failure_becomes_event_not_crash(tmp_path):
    setup = bootstrap_closed_loop(shift_scenario(seed=19, batch_count=4, shift_at=2), tmp_path)
    batch = setup.data.batches[0]
    broken = Dataset(
        columns=[c for c in batch.columns if c != "x0"],
        types={k: v for k, v in batch.types.items() if k != "x0"},
        rows=[row[1:] for row in batch.rows],
    )
    sample, events = setup.engine.step(broken, 0)
    assert any(e.kind == "validation_failed" for e in events)
    assert "x0" not in sample.per_feature_psi


def test_missing_reference_stats_raises(tmp_path):
    setup = bootstrap_closed_loop(shift_scenario(seed=23, batch_count=4, shift_at=2), tmp_path)
    config = MonitorConfig(
        model_name=setup.monitor_config.model_name,
        features=["x0", "ghost"],
        retrain_pipeline=str(setup.pipeline_path),
        dataset_id=setup.monitor_config.dataset_id,
        labels_available=False,
    )
    engine = MonitorEngine(config, tmp_path / "store", tmp_path / "s3")
    with pytest.raises(MonitorError, match="ghost"):
        engine.step(setup.data.batches[0], 0)


def test_monitor_outputs_files(tmp_path):
    setup = bootstrap_closed_loop(flip_scenario(seed=43, batch_count=10, flip_at=5), tmp_path)
    result = setup.engine.run(setup.data.batches)
    out = write_monitor_outputs(result, setup.engine.session_dir, figure=True)

    lines = out.events_path.read_text().strip().splitlines()
    assert len(lines) == len(result.events)
    assert all("kind" in json.loads(line) for line in lines)

    header, *rows = out.metrics_path.read_text().strip().splitlines()
    assert header == "batch,drift_score,accuracy,latency_ms,posterior"
    assert len(rows) == len(result.samples)
    assert out.figure_path.is_file() and out.figure_path.stat().st_size > 0


def test_no_production_model_is_config_error(tmp_path):
    config = MonitorConfig(
        model_name="ghost-model",
        features=["x0"],
        retrain_pipeline="nowhere.yaml",
        labels_available=True,
    )
    with pytest.raises(MonitorError, match="no production version"):
        MonitorEngine(config, tmp_path / "store", tmp_path / "s")
