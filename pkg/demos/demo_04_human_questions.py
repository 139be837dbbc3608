"""
Swapping in human-written questions
===================================

Replace automatic question generation with question sets of growing
length. Here the sets are synthesized from the stub at several context
windows, so each longer question contains the shorter ones.
"""

from qaspan.annotate import ReplayAnnotator, extract_all
from qaspan.backends import BackendConfig, StubBackend
from qaspan.fixtures import build_fixture
from qaspan.humanqg import build_nested_question_sets, human_question_totals, run_humanqg_eval

dataset, annotations = build_fixture()
spans = extract_all(dataset, ReplayAnnotator(annotations))
sets = build_nested_question_sets(dataset, spans)
print(human_question_totals(sets))

example = next(s for s in sets if not s.discarded and s.intermediates)
print("shortest:", example.shortest.text)
for q in example.intermediates:
    print("        :", q.text)
print("longest: ", example.longest.text)

res = run_humanqg_eval(dataset, sets, spans, StubBackend(BackendConfig()), seed=0)
for mode, rep in res.reports.items():
    print(f"{mode:12} threshold {res.thresholds[mode]:5.2f}  test F1 {rep.f1:.3f}  AUC {rep.auc:.3f}")
print("avg length by bucket:", res.length_stats)
print("% inherited by bucket:", res.inherited_by_bucket)
