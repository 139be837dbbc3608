"""Thresholding, F1, ROC/AUC and paired bootstrap for error detection.

Conventions used throughout: the positive class is *non-factual*
(``gold == 0``), every system emits higher-is-more-factual scores, and an
item is predicted non-factual iff ``score < threshold``.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CONVENTIONS = {
    "positive_class": "non-factual (gold == 0)",
    "decision_rule": "predict non-factual iff score < threshold",
    "threshold_candidates": "midpoints between adjacent distinct scores, plus min-1 and max+1",
    "threshold_ties": "smallest threshold among F1 maximizers",
    "macro_degenerate_pairs": "no gold and no predicted positives -> 1.0; gold positives but no predictions -> 0.0",
    "roc_ties": "tied scores form one step (diagonal segment)",
    "bootstrap_p": "fraction of resamples in which the observed winner does not win (one-sided); "
                   "two_sided_p = min(1, 2p); identical systems -> 1.0",
}


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredItem:
    item_id: str
    score: float
    gold: int
    pair_id: str = ""

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise EvalError(f"item {self.item_id!r} has non-finite score {self.score}")
        if self.gold not in (0, 1):
            raise EvalError(f"item {self.item_id!r}: gold must be 0 or 1")


def _arrays(items: Sequence[ScoredItem]) -> tuple[np.ndarray, np.ndarray]:
    return (np.array([it.score for it in items], dtype=float),
            np.array([it.gold for it in items], dtype=int))


def _prf(tp, fp, fn) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def confusion(scores: np.ndarray, gold: np.ndarray, threshold: float) -> dict:
    pred_nf = scores < threshold
    nf = gold == 0
    return {"tp": int(np.sum(pred_nf & nf)), "fp": int(np.sum(pred_nf & ~nf)),
            "fn": int(np.sum(~pred_nf & nf)), "tn": int(np.sum(~pred_nf & ~nf))}


def candidate_thresholds(scores: Iterable[float]) -> list[float]:
    u = np.unique(np.asarray(list(scores), dtype=float))
    if u.size == 0:
        raise EvalError("no scores")
    mids = (u[:-1] + u[1:]) / 2.0
    return [float(u[0] - 1.0), *map(float, mids), float(u[-1] + 1.0)]


def tune_threshold(items: Sequence[ScoredItem]) -> tuple[float, float]:
    """Best-F1 threshold on validation items; returns ``(threshold, f1)``."""
    if not items:
        raise EvalError("empty validation set")
    scores, gold = _arrays(items)
    cands = candidate_thresholds(scores)
    if not np.any(gold == 0):
        logger.warning("no non-factual items in validation set; threshold falls back to below-min sentinel")
        return cands[0], 0.0
    best_t, best_f = cands[0], -1.0
    for t in cands:
        c = confusion(scores, gold, t)
        f = _prf(c["tp"], c["fp"], c["fn"])[2]
        if f > best_f:
            best_t, best_f = t, f
    return best_t, best_f


# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    level: str
    threshold: float
    averaging: str
    precision: float
    recall: float
    f1: float
    pooled_f1: float
    macro_f1: float
    counts: dict
    roc_points: list[tuple[float, float]] = field(default_factory=list)
    auc: float | None = None
    per_pair: dict[str, float] = field(default_factory=dict)
    n_items: int = 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["roc_points"] = [list(p) for p in self.roc_points]
        d["conventions"] = CONVENTIONS
        return d


def per_pair_f1(items: Sequence[ScoredItem], threshold: float) -> dict[str, float]:
    groups: dict[str, list[ScoredItem]] = defaultdict(list)
    for it in items:
        groups[it.pair_id or it.item_id].append(it)
    out = {}
    for pid in sorted(groups):
        s, g = _arrays(groups[pid])
        c = confusion(s, g, threshold)
        n_gold, n_pred = c["tp"] + c["fn"], c["tp"] + c["fp"]
        if n_gold == 0 and n_pred == 0:
            out[pid] = 1.0
        elif n_pred == 0:
            out[pid] = 0.0
        else:
            out[pid] = _prf(c["tp"], c["fp"], c["fn"])[2]
    return out


def evaluate_f1(items: Sequence[ScoredItem], threshold: float, level: str = "span",
                averaging: str = "pooled") -> EvalReport:
    if not items:
        raise EvalError("empty test set")
    if level not in ("summary", "span") or averaging not in ("pooled", "per_pair_macro"):
        raise EvalError(f"bad level/averaging {level!r}/{averaging!r}")
    scores, gold = _arrays(items)
    c = confusion(scores, gold, threshold)
    p, r, f = _prf(c["tp"], c["fp"], c["fn"])
    pairs = per_pair_f1(items, threshold)
    macro = float(np.mean(list(pairs.values())))
    points, auc = [], None
    if np.any(gold == 0) and np.any(gold == 1):
        points, auc = roc_curve(items)
    return EvalReport(level, threshold, averaging, p, r, f if averaging == "pooled" else macro, f, macro, c,
                      points, auc, pairs, len(items))


def roc_curve(items: Sequence[ScoredItem]) -> tuple[list[tuple[float, float]], float]:
    """ROC points (FPR, TPR) for detecting non-factual items, and trapezoid AUC."""
    scores, gold = _arrays(items)
    n_pos, n_neg = int(np.sum(gold == 0)), int(np.sum(gold == 1))
    if n_pos == 0 or n_neg == 0:
        raise EvalError("ROC needs both factual and non-factual items")
    order = np.argsort(scores, kind="mergesort")
    s, g = scores[order], gold[order]
    tps = np.cumsum(g == 0)
    fps = np.cumsum(g == 1)
    last_of_group = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tpr = np.r_[0.0, tps[last_of_group] / n_pos]
    fpr = np.r_[0.0, fps[last_of_group] / n_neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


def threshold_sweep(items: Sequence[ScoredItem]) -> list[dict]:
    if not items:
        raise EvalError("empty item list")
    scores, gold = _arrays(items)
    rows, prev_recall = [], -1.0
    for t in candidate_thresholds(scores):
        c = confusion(scores, gold, t)
        p, r, f = _prf(c["tp"], c["fp"], c["fn"])
        assert r >= prev_recall, "recall must be nondecreasing in the threshold"
        prev_recall = r
        rows.append({"threshold": t, "precision": p, "recall": r, "f1": f, **c})
    return rows


# ---------------------------------------------------------------------------

@dataclass
class BootstrapResult:
    p_value: float
    two_sided_p: float
    observed_f1_a: float
    observed_f1_b: float
    resamples: int
    seed: int
    convention: str = CONVENTIONS["bootstrap_p"]

    def as_dict(self) -> dict:
        return asdict(self)


def _batch_f1(pred_nf: np.ndarray, nf: np.ndarray) -> np.ndarray:
    tp = np.sum(pred_nf & nf, axis=1)
    fp = np.sum(pred_nf & ~nf, axis=1)
    fn = np.sum(~pred_nf & nf, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 2 * tp + fp + fn
        return np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)


def paired_bootstrap(items_a: Sequence[ScoredItem], items_b: Sequence[ScoredItem], resamples: int = 1000,
                     seed: int = 0, threshold_a: float | None = None,
                     threshold_b: float | None = None) -> BootstrapResult:
    """Paired bootstrap over items on the F1 difference between two systems.

    Thresholds default to each system's best-F1 threshold on the given items;
    pass validation-tuned thresholds for held-out comparisons.
    """
    a_by = {it.item_id: it for it in items_a}
    b_by = {it.item_id: it for it in items_b}
    if set(a_by) != set(b_by) or len(a_by) != len(items_a) or len(b_by) != len(items_b):
        raise EvalError("paired bootstrap needs both systems to score the same item ids")
    ids = sorted(a_by)
    if any(a_by[i].gold != b_by[i].gold for i in ids):
        raise EvalError("gold labels differ between systems")
    if resamples < 1:
        raise EvalError("resamples must be positive")
    a = [a_by[i] for i in ids]
    b = [b_by[i] for i in ids]
    ta = tune_threshold(a)[0] if threshold_a is None else threshold_a
    tb = tune_threshold(b)[0] if threshold_b is None else threshold_b
    sa, gold = _arrays(a)
    sb, _ = _arrays(b)
    pred_a, pred_b, nf = sa < ta, sb < tb, gold == 0
    f_a = _prf(*[confusion(sa, gold, ta)[k] for k in ("tp", "fp", "fn")])[2]
    f_b = _prf(*[confusion(sb, gold, tb)[k] for k in ("tp", "fp", "fn")])[2]
    if f_a == f_b:
        return BootstrapResult(1.0, 1.0, f_a, f_b, resamples, seed)
    sign = 1.0 if f_a > f_b else -1.0
    rng = np.random.default_rng(seed)
    n, losses, done = len(ids), 0, 0
    batch = max(1, min(resamples, 2_000_000 // max(n, 1)))
    while done < resamples:
        k = min(batch, resamples - done)
        idx = rng.integers(0, n, size=(k, n))
        delta = _batch_f1(pred_a[idx], nf[idx]) - _batch_f1(pred_b[idx], nf[idx])
        losses += int(np.sum(sign * delta <= 0))
        done += k
    p = losses / resamples
    return BootstrapResult(p, min(1.0, 2 * p), f_a, f_b, resamples, seed)


# ---------------------------------------------------------------------------
# output

def write_csv(rows: Sequence[dict], path, fieldnames: Sequence[str] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = list(fieldnames or (rows[0].keys() if rows else []))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})


def roc_rows(points: Sequence[tuple[float, float]], system: str = "") -> list[dict]:
    return [{"system": system, "fpr": fpr, "tpr": tpr} for fpr, tpr in points]


# ---------------------------------------------------------------------------
# adapters from system outputs to items

def span_items(verdicts) -> list[ScoredItem]:
    """Span-level items from pipeline verdicts; errored spans are skipped."""
    return [ScoredItem(v.span_id, v.score, int(v.gold_label), sv.pair_id)
            for sv in verdicts for v in sv.span_verdicts if v.status != "errored"]


def summary_items(verdicts) -> list[ScoredItem]:
    return [ScoredItem(sv.pair_id, sv.score, int(sv.summary_gold), sv.pair_id) for sv in verdicts]


def baseline_span_items(run, spans) -> list[ScoredItem]:
    return [ScoredItem(s.span_id, run.span_scores[pid][s.span_id], s.gold_label, pid)
            for pid in run.span_scores for s in spans[pid]]


def baseline_summary_items(run, dataset) -> list[ScoredItem]:
    from .corpus import derive_summary_gold

    pairs = dataset.by_id()
    return [ScoredItem(pid, score, derive_summary_gold(pairs[pid]), pid)
            for pid, score in run.summary_scores.items()]


def restrict(items: Sequence[ScoredItem], pair_ids) -> list[ScoredItem]:
    keep = set(pair_ids)
    return [it for it in items if it.pair_id in keep]
