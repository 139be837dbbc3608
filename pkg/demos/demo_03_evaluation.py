"""
Localization metrics: thresholds, ROC and significance
======================================================

Tune a threshold on half of the summaries, evaluate on the other half, and
compare the QA metric with the exact-match baseline using a paired
bootstrap.
"""

import numpy as np

from qaspan.annotate import ReplayAnnotator, extract_all
from qaspan.backends import BackendConfig, StubBackend
from qaspan.baselines import run_em
from qaspan.corpus import split_dataset
from qaspan.eval import (baseline_span_items, evaluate_f1, paired_bootstrap, restrict, roc_curve, span_items,
                         tune_threshold)
from qaspan.fixtures import build_fixture
from qaspan.pipeline import MetricConfig, run_pipeline

dataset, annotations = build_fixture()
spans = extract_all(dataset, ReplayAnnotator(annotations))
stub = StubBackend(BackendConfig())
verdicts, _ = run_pipeline(dataset, spans, stub, stub, MetricConfig.qafe())

systems = {"QAFE": span_items(verdicts), "EM": baseline_span_items(run_em(dataset, spans), spans)}
val, test = split_dataset(dataset, seed=0)
val_ids, test_ids = [p.pair_id for p in val], [p.pair_id for p in test]

thresholds = {}
for name, items in systems.items():
    t, f1 = tune_threshold(restrict(items, val_ids))
    thresholds[name] = t
    rep = evaluate_f1(restrict(items, test_ids), t)
    print(f"{name:5} t={t:5.2f}  val F1 {f1:.3f}  test F1 {rep.pooled_f1:.3f} "
          f"(macro {rep.macro_f1:.3f})  AUC {rep.auc:.3f}")

points, auc = roc_curve(restrict(systems["QAFE"], test_ids))
print("QAFE ROC points:", np.round(points, 2).tolist())

res = paired_bootstrap(restrict(systems["EM"], test_ids), restrict(systems["QAFE"], test_ids),
                       resamples=2000, seed=0, threshold_a=thresholds["EM"], threshold_b=thresholds["QAFE"])
print(f"EM vs QAFE: F1 {res.observed_f1_a:.3f} vs {res.observed_f1_b:.3f}, one-sided p = {res.p_value:.3f}")
