"""
Questions that inherit summary errors
=====================================

A factual span can be flagged as an error when its question copies a
hallucinated phrase from elsewhere in the summary: the question presupposes
something the document never says, so nothing answers it. Shrinking the
generator's context window removes the copied error and the span is
judged correctly again.
"""

from qaspan.analysis import detect_inherited_errors, inherited_error_rates
from qaspan.annotate import ReplayAnnotator, extract_all
from qaspan.backends import BackendConfig, Question, StubBackend
from qaspan.corpus import Dataset
from qaspan.fixtures import build_fixture
from qaspan.pipeline import MetricConfig, run_pipeline

dataset, annotations = build_fixture()
spans = extract_all(dataset, ReplayAnnotator(annotations))
pair = dataset.get("fx01")
print("document:", pair.document)
print("summary: ", pair.summary)
print("non-factual tokens:", [t.text for t in pair.tokens if not t.gold_label])

for window in (None, 2):
    stub = StubBackend(BackendConfig(context_window=window))
    verdicts, _ = run_pipeline(Dataset("one", [pair]), spans, stub, stub, MetricConfig.qafe())
    v = next(v for v in verdicts[0].span_verdicts if v.span_text == "matchbox labels")
    q = v.questions[0]
    inh = detect_inherited_errors(Question(q["question_id"], q["text"], v.span_id), pair)
    print(f"\nwindow={window}: {q['text']}")
    print(f"  inherited: {[w for w, _ in inh.inherited_tokens]} ({inh.category})")
    print(f"  answers: {[a['text'] or '<unanswerable>' for a in v.predicted_answers]}  score {v.score}")

# longer questions inherit more errors
print("\nwindow  % questions with inherited errors (non-factual summaries)")
for window in (0, 1, 2, 4, 8, None):
    stub = StubBackend(BackendConfig(context_window=window))
    verdicts, _ = run_pipeline(dataset, spans, stub, stub, MetricConfig.qafe())
    row = inherited_error_rates(verdicts, dataset)
    print(f"{str(window):>6}  {row['pct_extrinsic'] + row['pct_only_intrinsic']:.1f}")
