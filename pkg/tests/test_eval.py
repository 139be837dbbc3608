import csv
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qaspan.eval import (EvalError, ScoredItem, candidate_thresholds, evaluate_f1, paired_bootstrap,
                         per_pair_f1, roc_curve, threshold_sweep, tune_threshold, write_csv)


def items(scores, gold, pairs=None):
    pairs = pairs or [f"p{i}" for i in range(len(scores))]
    return [ScoredItem(f"i{i}", float(s), int(g), p) for i, (s, g, p) in enumerate(zip(scores, gold, pairs))]


# -- independent oracles ------------------------------------------------------

def f1_oracle(scores, gold, t):
    tp = sum(1 for s, g in zip(scores, gold) if s < t and g == 0)
    fp = sum(1 for s, g in zip(scores, gold) if s < t and g == 1)
    fn = sum(1 for s, g in zip(scores, gold) if s >= t and g == 0)
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def auc_oracle(scores, gold):
    """Probability a non-factual item scores below a factual one, ties count half."""
    pos = [s for s, g in zip(scores, gold) if g == 0]
    neg = [s for s, g in zip(scores, gold) if g == 1]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p < n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def random_instance(rng, n_max=200):
    n = rng.randint(2, n_max)
    levels = rng.randint(1, max(1, n // 3))  # few distinct values forces ties
    scores = [rng.randint(0, levels) / levels for _ in range(n)]
    gold = [rng.randint(0, 1) for _ in range(n)]
    gold[0], gold[1] = 0, 1
    return scores, gold


# -- thresholds ---------------------------------------------------------------

def test_tune_two_items():
    t, f = tune_threshold(items([0.9, 0.2], [1, 0]))
    assert t == pytest.approx(0.55) and f == 1.0


def test_tune_all_factual():
    t, f = tune_threshold(items([0.3, 0.6], [1, 1]))
    assert t == pytest.approx(-0.7) and f == 0.0


def test_tune_identical_scores():
    t, f = tune_threshold(items([0.5] * 4, [0, 1, 0, 1]))
    # predicting everything non-factual is the only nonzero-F1 option
    assert t == pytest.approx(1.5) and f == pytest.approx(2 / 3)


def test_candidates():
    assert candidate_thresholds([1, 3, 3, 2]) == [0.0, 1.5, 2.5, 4.0]


def test_tune_matches_exhaustive_oracle():
    rng = random.Random(1)
    for _ in range(50):
        scores, gold = random_instance(rng)
        t, f = tune_threshold(items(scores, gold))
        u = sorted(set(scores))
        cands = [u[0] - 1] + [(a + b) / 2 for a, b in zip(u, u[1:])] + [u[-1] + 1]
        best = max(f1_oracle(scores, gold, c) for c in cands)
        first = min(c for c in cands if f1_oracle(scores, gold, c) == best)
        assert f == pytest.approx(best, abs=1e-12) and t == pytest.approx(first, abs=1e-12)


# -- F1 -------------------------------------------------------------------------

def test_perfect_predictions():
    its = items([0.1, 0.9, 0.2, 0.8], [0, 1, 0, 1], ["a", "a", "b", "b"])
    rep = evaluate_f1(its, 0.5)
    assert rep.pooled_f1 == 1.0 and rep.macro_f1 == 1.0 and rep.auc == 1.0


def test_all_predicted_factual():
    rep = evaluate_f1(items([0.9, 0.8], [0, 1]), 0.1)
    assert rep.recall == 0.0 and rep.f1 == 0.0


def test_macro_with_degenerate_pair():
    # pair a: all factual, nothing flagged -> 1.0; pair b: tp=1, fp=1, fn=0 -> F1 = 2/3
    its = items([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 1], ["a", "a", "b", "b"])
    rep = evaluate_f1(its, 0.5, averaging="per_pair_macro")
    assert rep.per_pair == {"a": 1.0, "b": pytest.approx(2 / 3)}
    assert rep.macro_f1 == pytest.approx((1.0 + 2 / 3) / 2) and rep.f1 == rep.macro_f1


def test_macro_missed_errors_score_zero():
    assert per_pair_f1(items([0.9], [0], ["a"]), 0.5) == {"a": 0.0}


def test_evaluate_rejects_bad_input():
    with pytest.raises(EvalError):
        evaluate_f1([], 0.5)
    with pytest.raises(EvalError):
        ScoredItem("x", float("nan"), 1)


# -- ROC ------------------------------------------------------------------------

def test_roc_perfect_and_ties():
    _, auc = roc_curve(items([0.9, 0.8, 0.1], [1, 1, 0]))
    assert auc == 1.0
    pts, auc = roc_curve(items([0.5] * 4, [0, 1, 0, 1]))
    assert pts == [(0.0, 0.0), (1.0, 1.0)] and auc == 0.5


def test_roc_single_class():
    with pytest.raises(EvalError):
        roc_curve(items([0.1, 0.2], [1, 1]))


def test_auc_matches_pair_count_oracle():
    rng = random.Random(2)
    for _ in range(50):
        scores, gold = random_instance(rng)
        _, auc = roc_curve(items(scores, gold))
        assert abs(auc - auc_oracle(scores, gold)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 1)), min_size=2, max_size=40),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_auc_invariant_under_monotone_transform(pairs, scale, shift):
    scores = [s for s, _ in pairs]
    gold = [g for _, g in pairs]
    if len(set(gold)) < 2:
        return
    _, a = roc_curve(items(scores, gold))
    _, b = roc_curve(items([scale * s + shift for s in scores], gold))
    _, c = roc_curve(items([s ** 3 for s in scores], gold))
    assert abs(a - b) <= 1e-12 and abs(a - c) <= 1e-12
    assert 0.0 <= a <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=1, max_size=40))
def test_tuned_f1_is_max_of_sweep(pairs):
    its = items([s for s, _ in pairs], [g for _, g in pairs])
    t, f = tune_threshold(its)
    rows = threshold_sweep(its)
    if any(g == 0 for _, g in pairs):
        assert f == max(r["f1"] for r in rows)
    assert all(0.0 <= r["f1"] <= 1.0 for r in rows)


# -- sweep ----------------------------------------------------------------------

def test_sweep_perfect_separation():
    rows = threshold_sweep(items([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]))
    assert any(r["precision"] == 1.0 and r["recall"] == 1.0 for r in rows)


def test_sweep_single_item():
    rows = threshold_sweep(items([0.4], [0]))
    assert [(r["tp"] + r["fp"]) for r in rows] == [0, 1]


def test_sweep_consistent_with_evaluate():
    its = items([0.1, 0.5, 0.5, 0.7, 0.9], [0, 1, 0, 1, 1])
    for r in threshold_sweep(its):
        rep = evaluate_f1(its, r["threshold"])
        assert (rep.precision, rep.recall, rep.pooled_f1) == (r["precision"], r["recall"], r["f1"])


# -- bootstrap ------------------------------------------------------------------

def _perfect_vs_coin(n=200, seed=3):
    rng = np.random.default_rng(seed)
    gold = rng.integers(0, 2, n)
    perfect = items(np.where(gold == 1, 1.0, 0.0), gold)
    coin = items(rng.integers(0, 2, n).astype(float), gold)
    return perfect, coin


def bootstrap_oracle(a, b, ta, tb, resamples, seed):
    """Row-by-row version of the vectorized bootstrap on the same index draws."""
    ids = sorted(it.item_id for it in a)
    A = {it.item_id: it for it in a}
    B = {it.item_id: it for it in b}
    sa = [A[i].score for i in ids]
    sb = [B[i].score for i in ids]
    g = [A[i].gold for i in ids]
    fa, fb = f1_oracle(sa, g, ta), f1_oracle(sb, g, tb)
    if fa == fb:
        return 1.0
    idx = np.random.default_rng(seed).integers(0, len(ids), size=(resamples, len(ids)))
    losses = 0
    for row in idx:
        da = f1_oracle([sa[j] for j in row], [g[j] for j in row], ta)
        db = f1_oracle([sb[j] for j in row], [g[j] for j in row], tb)
        d = da - db if fa > fb else db - da
        losses += d <= 0
    return losses / resamples


def test_bootstrap_identical_systems():
    a, _ = _perfect_vs_coin()
    assert paired_bootstrap(a, a, seed=0).p_value == 1.0


def test_bootstrap_perfect_vs_coin():
    a, b = _perfect_vs_coin()
    res = paired_bootstrap(a, b, resamples=1000, seed=0)
    assert res.observed_f1_a == 1.0 and res.p_value < 0.05
    # frozen from the seeded run: coin-flip F1 is 0.6532 and B never catches up
    assert res.p_value == 0.0 and res.observed_f1_b == pytest.approx(0.6531986531986532)
    assert res.p_value == bootstrap_oracle(a, b, tune_threshold(a)[0], tune_threshold(b)[0], 1000, 0)
    assert paired_bootstrap(a, b, resamples=1000, seed=0) == res
    # direction does not matter
    assert paired_bootstrap(b, a, resamples=1000, seed=0).p_value == res.p_value


def test_bootstrap_close_systems_oracle():
    rng = random.Random(5)
    scores, gold = random_instance(rng, 60)
    a = items(scores, gold)
    b = items([s + (0.3 if i % 4 == 0 else 0.0) for i, s in enumerate(scores)], gold)
    res = paired_bootstrap(a, b, resamples=300, seed=11, threshold_a=0.5, threshold_b=0.5)
    assert res.p_value == bootstrap_oracle(a, b, 0.5, 0.5, 300, 11)
    assert res.two_sided_p == min(1.0, 2 * res.p_value)


def test_bootstrap_requires_same_items():
    a, b = _perfect_vs_coin()
    with pytest.raises(EvalError):
        paired_bootstrap(a, b[:-1])


def test_write_csv(tmp_path):
    write_csv([{"a": 1 / 3, "b": "x"}], tmp_path / "o.csv")
    assert list(csv.DictReader(open(tmp_path / "o.csv"))) == [{"a": "0.3333333333", "b": "x"}]
