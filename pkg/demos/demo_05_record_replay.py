"""
Recording model calls and replaying them offline
================================================

Any backend can be wrapped in a recorder. The saved cache replays the same
run bit for bit without the models. Point ``BackendConfig(provider="service",
endpoint=...)`` at a live QG/QA server to record real outputs the same way.
"""

import tempfile
from pathlib import Path

from qaspan.annotate import ReplayAnnotator, extract_all
from qaspan.backends import BackendConfig, RecordingBackend, StubBackend, load_replay_cache
from qaspan.fixtures import build_fixture
from qaspan.pipeline import MetricConfig, run_pipeline

dataset, annotations = build_fixture()
spans = extract_all(dataset, ReplayAnnotator(annotations))

recorder = RecordingBackend(StubBackend(BackendConfig()))
live, _ = run_pipeline(dataset, spans, recorder, recorder, MetricConfig.qafe())

with tempfile.TemporaryDirectory() as tmp:
    cache = Path(tmp) / "cache.jsonl"
    recorder.save(cache)
    print(f"{len(recorder.records)} recorded calls")
    replay = load_replay_cache(cache)
    offline, _ = run_pipeline(dataset, spans, replay, replay, MetricConfig.qafe())

same = [a.to_record("x") for a in live] == [b.to_record("x") for b in offline]
print("replayed verdicts identical:", same)
