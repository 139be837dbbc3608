import math

import pytest
from hypothesis import given, settings, strategies as st

from qaspan.annotate import CandidateSpan
from qaspan.backends import Answer, Backend, BackendConfig, BackendError, Question, StubBackend
from qaspan.pipeline import (ConfigError, MetricConfig, SpanVerdict, compare_answers, dump_verdicts,
                             filter_questions, load_verdicts, run_pipeline, score_span, score_summary)

SPAN = CandidateSpan("p:0-6", 0, 6, "London", "NE", "GPE")


class ScriptedQA(Backend):
    """Answers from a dict keyed by (question, context)."""

    model_id = "scripted"

    def __init__(self, table, fail=()):
        super().__init__(BackendConfig())
        self.table, self.fail = table, set(fail)

    def _answer_raw(self, payload):
        if payload["question"] in self.fail:
            raise BackendError("down", retryable=True)
        text, prob = self.table.get((payload["question"], payload["context"]), ("", 0.0))
        return {"answer": text, "start": None if not text else 0, "end": None if not text else len(text),
                "answerable_prob": prob}


def _q(i, text="q"):
    return Question(f"p:0-6#q{i}", f"{text}{i}", "p:0-6")


@pytest.mark.parametrize("answer,kept", [("London", True), ("the London", True), ("london.", True),
                                         ("Paris", False), ("", False)])
def test_filter_normalization(answer, kept):
    qa = ScriptedQA({("q0", "S"): (answer, 1.0)})
    k, d = filter_questions(SPAN, [_q(0)], qa, "S")
    assert (len(k) == 1) == kept and len(k) + len(d) == 1


def test_qe_components():
    qe = MetricConfig.qe()
    assert compare_answers(Answer("London", 0, 6, 1.0, False), SPAN, qe) == pytest.approx(1.0)
    zero = compare_answers(Answer("", None, None, 0.0, True), SPAN, qe)
    assert zero == 0.0
    # zero overlap, zero similarity, zero probability -> 0
    scorers = {"lexical_overlap": lambda a, b: 0.0, "semantic_scorer": lambda a, b: 0.0}
    assert compare_answers(Answer("Paris", 0, 5, 0.6, False), SPAN, qe, scorers) == pytest.approx(0.2)


def test_qafe_unanswerable_is_zero():
    assert compare_answers(Answer("", None, None, 0.1, True), SPAN, MetricConfig.qafe()) == 0.0
    assert compare_answers(Answer("London", 0, 6, 1.0, False), SPAN, MetricConfig.qafe()) == 5.0


def test_scorer_out_of_range_rejected():
    with pytest.raises(ConfigError):
        compare_answers(Answer("x", 0, 1, 1.0, False), SPAN, MetricConfig.qafe(), {"learned_scorer": lambda a, b: 7})


@pytest.mark.parametrize("config,sentinel", [(MetricConfig.qafe(), 6.0), (MetricConfig.qe(), 1.0)])
def test_filtered_sentinel(config, sentinel):
    v = score_span(SPAN, [], ScriptedQA({}), "D", config)
    assert (v.status, v.score) == ("filtered", sentinel)


def test_mean_over_kept_questions():
    scorers = {"learned_scorer": lambda pred, gold: {"a": 2.0, "b": 4.0}[pred]}
    qa = ScriptedQA({("q0", "D"): ("a", 1.0), ("q1", "D"): ("b", 1.0)})
    v = score_span(SPAN, [_q(0), _q(1)], qa, "D", MetricConfig.qafe(), scorers)
    assert v.score == pytest.approx(3.0) and v.status == "scored"
    assert v.questions_used == ["p:0-6#q0", "p:0-6#q1"]


def test_unanswerable_status_qafe():
    v = score_span(SPAN, [_q(0)], ScriptedQA({}), "D", MetricConfig.qafe())
    assert (v.status, v.score) == ("unanswerable", 0.0)


def _sv(score, status="scored"):
    return SpanVerdict("s", score, status)


@pytest.mark.parametrize("scores,expected", [([1.0, 0.0], 0.5), ([0.7], 0.7), ([6.0, 0.0], 3.0)])
def test_summary_mean(scores, expected):
    assert score_summary("p", [_sv(s) for s in scores]).score == pytest.approx(expected)


def test_summary_skips_errored_and_empty():
    assert score_summary("p", [_sv(1.0), _sv(float("nan"), "errored")]).score == 1.0
    assert score_summary("p", [_sv(float("nan"), "errored")]) is None
    assert score_summary("p", []) is None


def test_config_consistency():
    with pytest.raises(ConfigError):
        MetricConfig("QAFE", frozenset({"learned_scorer"}), 1.0, "score_zero", (0.0, 5.0))
    with pytest.raises(ConfigError):
        MetricConfig.for_style("bleu")
    assert MetricConfig.for_style("questeval") == MetricConfig.qe()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 6, allow_nan=False), min_size=1, max_size=30))
def test_summary_is_mean_property(scores):
    sv = score_summary("p", [_sv(s) for s in scores])
    assert abs(sv.score - math.fsum(scores) / len(scores)) <= 1e-12
    assert min(scores) - 1e-12 <= sv.score <= max(scores) + 1e-12


def _run(fixture_corpus, style="QAFE", **kw):
    ds, _, spans = fixture_corpus
    b = StubBackend(BackendConfig(questions_per_span=1 if style == "QAFE" else 3, **kw))
    return run_pipeline(ds, spans, b, b, MetricConfig.for_style(style))


def test_fixture_run_deterministic(tmp_path, fixture_corpus):
    a, rep = _run(fixture_corpus)
    b, _ = _run(fixture_corpus)
    dump_verdicts(a, "QAFE", tmp_path / "a.jsonl")
    dump_verdicts(b, "QAFE", tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    metric, again = load_verdicts(tmp_path / "a.jsonl")
    assert metric == "QAFE" and [v.score for v in again] == [v.score for v in a]
    assert sum(rep.status_counts.values()) == sum(len(s) for s in fixture_corpus[2].values())


def test_fixture_statuses_and_sentinels(fixture_corpus):
    verdicts, rep = _run(fixture_corpus)
    assert set(rep.status_counts) <= {"scored", "filtered", "unanswerable"}
    for sv in verdicts:
        for v in sv.span_verdicts:
            if v.status == "filtered":
                assert v.score == 6.0
            if v.status == "unanswerable":
                assert v.score == 0.0
            assert len(v.questions) == 1
    qe, _ = _run(fixture_corpus, "QE")
    assert all(v.score == 1.0 for sv in qe for v in sv.span_verdicts if v.status == "filtered")
    assert all(0.0 <= v.score <= 1.0 for sv in qe for v in sv.span_verdicts)


def test_copied_hallucination_case(fixture_corpus):
    verdicts, _ = _run(fixture_corpus)
    fx01 = next(sv for sv in verdicts if sv.pair_id == "fx01")
    v = next(v for v in fx01.span_verdicts if v.span_text == "matchbox labels")
    assert v.gold_label == 1 and v.status == "unanswerable" and v.score == 0.0
    assert "15 years" in v.questions[0]["text"]


def test_backend_failure_marks_span_errored(fixture_corpus):
    ds, _, spans = fixture_corpus
    stub = StubBackend(BackendConfig())
    q = stub.generate(spans["fx02"][1], ds.get("fx02").summary)[0].text

    class Flaky(StubBackend):
        def _answer_raw(self, payload):
            if payload["question"] == q:
                raise BackendError("timeout", retryable=True)
            return super()._answer_raw(payload)

    flaky = Flaky(BackendConfig())
    verdicts, rep = run_pipeline(ds, spans, stub, flaky, MetricConfig.qafe())
    fx02 = next(sv for sv in verdicts if sv.pair_id == "fx02")
    bad = [v for v in fx02.span_verdicts if v.status == "errored"]
    assert len(bad) == 1 and "timeout" in bad[0].error and rep.errors
    good = [v.score for v in fx02.span_verdicts if v.status != "errored"]
    assert fx02.score == pytest.approx(sum(good) / len(good))


def test_missing_spans_is_config_error(fixture_corpus):
    ds, _, _ = fixture_corpus
    b = StubBackend(BackendConfig())
    with pytest.raises(ConfigError):
        run_pipeline(ds, {}, b, b, MetricConfig.qafe())


def test_concurrency_does_not_change_output(fixture_corpus):
    ds, _, spans = fixture_corpus
    b = StubBackend(BackendConfig())
    one, _ = run_pipeline(ds, spans, b, b, MetricConfig.qafe(), max_workers=1)
    many, _ = run_pipeline(ds, spans, b, b, MetricConfig.qafe(), max_workers=8)
    assert [sv.to_record("x") for sv in one] == [sv.to_record("x") for sv in many]
