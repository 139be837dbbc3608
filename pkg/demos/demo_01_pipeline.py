"""
Scoring summaries span by span
==============================

Run both metric styles over the bundled fixture corpus with the rule-based
stub backend and look at what happens to each candidate span.
"""

from qaspan.annotate import ReplayAnnotator, extract_all
from qaspan.backends import BackendConfig, StubBackend
from qaspan.fixtures import build_fixture
from qaspan.pipeline import MetricConfig, run_pipeline

dataset, annotations = build_fixture()
spans = extract_all(dataset, ReplayAnnotator(annotations))
print(f"{len(dataset)} summaries, {sum(len(s) for s in spans.values())} candidate spans")

# QAFE style: one question per span, unanswerable -> 0, filtered -> 6
stub = StubBackend(BackendConfig(questions_per_span=1))
verdicts, report = run_pipeline(dataset, spans, stub, stub, MetricConfig.qafe())
print(report.as_dict()["status_counts"], f"filtered rate {report.filtered_rate:.2f}")

for sv in verdicts[:3]:
    print(f"\n{sv.pair_id}  summary score {sv.score:.2f}  gold {sv.summary_gold}")
    for v in sv.span_verdicts:
        q = v.questions[0]
        print(f"  [{v.status:12}] {v.score:4.1f}  gold={v.gold_label}  {v.span_text!r}")
        print(f"      Q: {q['text']}  (kept={q['kept']})")

# QE style: three questions per span, score = mean of F1, similarity, answerability
stub3 = StubBackend(BackendConfig(questions_per_span=3))
qe, qe_report = run_pipeline(dataset, spans, stub3, stub3, MetricConfig.qe())
print("\nQE", qe_report.as_dict()["status_counts"], f"filtered rate {qe_report.filtered_rate:.2f}")
