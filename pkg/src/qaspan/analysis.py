"""Inherited-error analysis and the question / subset tables built on verdict dumps."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from statistics import median
from typing import Mapping, Sequence

import numpy as np

from .backends import Question
from .corpus import AnnotatedPair, Dataset, Token, derive_summary_gold
from .eval import EvalError, ScoredItem, evaluate_f1, roc_curve
from .pipeline import SummaryVerdict
from .text import normalize_token, words

logger = logging.getLogger(__name__)

CONTENT_POS = frozenset({"noun", "proper-noun", "number", "adjective", "verb", "pronoun"})
CATEGORIES = ("extrinsic", "only_intrinsic", "none")
_RANK = {"none": 0, "only_intrinsic": 1, "extrinsic": 2}


@dataclass
class InheritedErrorReport:
    question_id: str
    inherited_tokens: list[tuple[str, Token]] = field(default_factory=list)
    category: str = "none"


def detect_inherited_errors(question: Question, pair: AnnotatedPair) -> InheritedErrorReport:
    q_words = set(words(question.text))
    inherited = []
    for tok in pair.tokens:
        if tok.gold_label or tok.pos not in CONTENT_POS:
            continue
        w = normalize_token(tok.text)
        if w and w in q_words:
            inherited.append((w, tok))
    if not inherited:
        category = "none"
    elif any(t.analysis_error_type == "extrinsic" for _, t in inherited):
        category = "extrinsic"
    else:
        category = "only_intrinsic"
    return InheritedErrorReport(question.question_id, inherited, category)


def _questions(sv: SummaryVerdict, kept_only: bool = False):
    for v in sv.span_verdicts:
        for q in v.questions:
            if kept_only and not q.get("kept"):
                continue
            yield v, Question(q["question_id"], q["text"], v.span_id, q.get("provenance", "model"))


def inherited_error_rates(verdicts: Sequence[SummaryVerdict], dataset: Dataset, metric: str = "") -> dict:
    """Percent of questions (non-factual summaries only) per inherited-error category.

    The denominator is every generated question; the count restricted to
    questions surviving filtering is reported alongside.
    """
    pairs = dataset.by_id()
    counts = {"all": defaultdict(int), "kept": defaultdict(int)}
    for sv in verdicts:
        pair = pairs[sv.pair_id]
        if derive_summary_gold(pair) == 1:
            continue
        for v, q in _questions(sv):
            cat = detect_inherited_errors(q, pair).category
            counts["all"][cat] += 1
            if any(x["question_id"] == q.question_id and x.get("kept") for x in v.questions):
                counts["kept"][cat] += 1
    row = {"dataset": dataset.name, "metric": metric}
    for scope, c in counts.items():
        n = sum(c.values())
        suffix = "" if scope == "all" else "_kept"
        row[f"n_questions{suffix}"] = n
        for cat in CATEGORIES:
            row[f"pct_{cat}{suffix}"] = round(100.0 * c[cat] / n, 1) if n else None
    if row["n_questions"] == 0:
        row["note"] = "no questions for non-factual summaries"
    return row


def span_categories(verdicts: Sequence[SummaryVerdict], dataset: Dataset) -> dict[str, str]:
    """Worst inherited-error category among each span's generated questions."""
    pairs = dataset.by_id()
    out = {}
    for sv in verdicts:
        pair = pairs[sv.pair_id]
        for v in sv.span_verdicts:
            worst = "none"
            for q in v.questions:
                cat = detect_inherited_errors(Question(q["question_id"], q["text"], v.span_id), pair).category
                if _RANK[cat] > _RANK[worst]:
                    worst = cat
            out[v.span_id] = worst
    return out


def factual_span_accuracy_by_group(verdicts: Sequence[SummaryVerdict], dataset: Dataset, threshold: float,
                                   metric: str = "") -> dict:
    cats = span_categories(verdicts, dataset)
    hit, tot = defaultdict(int), defaultdict(int)
    for sv in verdicts:
        for v in sv.span_verdicts:
            if v.status == "errored" or v.gold_label != 1:
                continue
            cat = cats[v.span_id]
            tot[cat] += 1
            hit[cat] += int(v.score >= threshold)
    row: dict = {"dataset": dataset.name, "metric": metric, "threshold": threshold}
    notes = []
    for cat in CATEGORIES:
        if tot[cat]:
            row[f"pct_correct_{cat}"] = round(100.0 * hit[cat] / tot[cat], 1)
            row[f"n_{cat}"] = tot[cat]
        else:
            notes.append(f"no factual spans in group {cat}")
    if notes:
        row["note"] = "; ".join(notes)
    return row


def question_stats(verdicts: Sequence[SummaryVerdict], metric: str = "", dataset: str = "") -> dict:
    lengths, per_summary = [], []
    for sv in verdicts:
        n = 0
        for v in sv.span_verdicts:
            for q in v.questions:
                lengths.append(len(q["text"].split()))
                n += 1
        per_summary.append(n)
    if not per_summary:
        return {}
    return {"dataset": dataset, "metric": metric,
            "avg_question_length": round(float(np.mean(lengths)), 1) if lengths else 0.0,
            "avg_questions_per_summary": round(float(np.mean(per_summary)), 1)}


# ---------------------------------------------------------------------------

def summary_error_rates(items: Sequence[ScoredItem]) -> dict[str, float]:
    groups: dict[str, list[int]] = defaultdict(list)
    for it in items:
        groups[it.pair_id].append(1 - it.gold)
    return {pid: sum(v) / len(v) for pid, v in groups.items()}


def _report(items: Sequence[ScoredItem], threshold: float) -> dict:
    rep = evaluate_f1(items, threshold, level="span")
    out = {"n_spans": len(items), "f1": rep.pooled_f1, "macro_f1": rep.macro_f1,
           "precision": rep.precision, "recall": rep.recall}
    try:
        out["roc_points"], out["auc"] = roc_curve(items)
    except EvalError:
        out["roc_points"], out["auc"] = [], None
    return out


def common_subset_eval(qa_verdicts: Mapping[str, Sequence[SummaryVerdict]],
                       systems: Mapping[str, Sequence[ScoredItem]],
                       thresholds: Mapping[str, float]) -> dict:
    """Span-level evaluation restricted to spans every QA metric actually scored.

    ``systems`` maps system name to span-level items (QA metrics and baselines
    alike), all over the same span universe.
    """
    if len(qa_verdicts) < 1:
        raise EvalError("need at least one QA metric")
    keep: set[str] | None = None
    for verdicts in qa_verdicts.values():
        scored = {v.span_id for sv in verdicts for v in sv.span_verdicts if v.status == "scored"}
        keep = scored if keep is None else keep & scored
    universe = {it.item_id for items in systems.values() for it in items}
    if not keep:
        raise EvalError("no span was scored by every QA metric")
    report = {"n_spans_total": len(universe), "n_spans_subset": len(keep & universe), "systems": {},
              "halves": {}}
    subsets = {name: [it for it in items if it.item_id in keep] for name, items in systems.items()}
    for name, items in subsets.items():
        report["systems"][name] = _report(items, thresholds[name])

    ref = next(iter(subsets.values()))
    rates = summary_error_rates(ref)
    cut = median(rates.values())
    bottom = {pid for pid, r in rates.items() if r <= cut}
    report["error_rate_median"] = cut
    for half, pids in (("bottom", bottom), ("top", set(rates) - bottom)):
        report["halves"][half] = {}
        for name, items in subsets.items():
            part = [it for it in items if it.pair_id in pids]
            report["halves"][half][name] = _report(part, thresholds[name]) if part else None
    return report


# ---------------------------------------------------------------------------

def length_bucket_inheritance(questions: Sequence[tuple[Question, AnnotatedPair]],
                              n_buckets: int = 4) -> list[dict]:
    """Share of questions with inherited errors per question-length bucket.

    Only questions from non-factual summaries count. Bucket edges are the
    quantiles of the question-length distribution.
    """
    rows = [(len(q.text.split()), detect_inherited_errors(q, p).category != "none")
            for q, p in questions if derive_summary_gold(p) == 0]
    if not rows:
        return []
    lengths = np.array([r[0] for r in rows])
    edges = np.unique(np.quantile(lengths, np.linspace(0, 1, n_buckets + 1)))
    out = []
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        sel = [inh for n, inh in rows if (lo <= n < hi) or (i == len(edges) - 2 and n == hi)]
        if sel:
            out.append({"min_len": float(lo), "max_len": float(hi), "n_questions": len(sel),
                        "pct_inherited": round(100.0 * sum(sel) / len(sel), 1)})
    if len(edges) == 1:
        out.append({"min_len": float(edges[0]), "max_len": float(edges[0]), "n_questions": len(rows),
                    "pct_inherited": round(100.0 * sum(r[1] for r in rows) / len(rows), 1)})
    return out


def format_table(rows: Sequence[Mapping], columns: Sequence[str], title: str = "") -> str:
    """Fixed-width text table."""
    cells = [[("" if r.get(c) is None else (f"{r[c]:.1f}" if isinstance(r.get(c), float) else str(r[c])))
              for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    line = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    out = ([title] if title else []) + [line, "-" * len(line)]
    out += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    if not rows:
        out.append("(empty)")
    return "\n".join(out) + "\n"
