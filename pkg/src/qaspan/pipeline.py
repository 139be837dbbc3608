"""The five-step QA-based factuality metric.

1. candidate spans (from :mod:`qaspan.annotate`)
2. question generation against the summary
3. question filtering: keep questions the summary answers with the span itself
4. question answering against the source document
5. answer comparison, then the summary score as the mean span score
"""
from __future__ import annotations

import difflib
import json
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .annotate import CandidateSpan
from .backends import Answer, Backend, BackendError, Question
from .corpus import AnnotatedPair, Dataset, derive_summary_gold
from .text import normalize_answer, token_f1

logger = logging.getLogger(__name__)

Scorer = Callable[[str, str], float]

STATUSES = ("scored", "filtered", "unanswerable", "errored")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    style: str
    components: frozenset
    filtered_span_sentinel: float
    unanswerable_rule: str
    score_range: tuple[float, float]

    def __post_init__(self):
        if self.style == "QE":
            ok = (self.components == {"lexical_overlap", "semantic_scorer", "answerability"}
                  and self.filtered_span_sentinel == 1.0 and self.score_range == (0.0, 1.0))
        elif self.style == "QAFE":
            ok = (self.components == {"learned_scorer"} and self.unanswerable_rule == "score_zero"
                  and self.filtered_span_sentinel == 6.0 and self.score_range == (0.0, 5.0))
        else:
            raise ConfigError(f"unknown metric style {self.style!r}")
        if not ok:
            raise ConfigError(f"inconsistent {self.style} configuration: {self}")

    @classmethod
    def qe(cls) -> "MetricConfig":
        return cls("QE", frozenset({"lexical_overlap", "semantic_scorer", "answerability"}),
                   1.0, "use_components", (0.0, 1.0))

    @classmethod
    def qafe(cls) -> "MetricConfig":
        return cls("QAFE", frozenset({"learned_scorer"}), 6.0, "score_zero", (0.0, 5.0))

    @classmethod
    def for_style(cls, style: str) -> "MetricConfig":
        style = style.upper()
        if style in ("QE", "QUESTEVAL"):
            return cls.qe()
        if style in ("QAFE", "QAFACTEVAL"):
            return cls.qafe()
        raise ConfigError(f"unknown metric style {style!r}")


def surface_similarity(pred: str, gold: str) -> float:
    """Character-level stand-in for an embedding similarity scorer."""
    a, b = normalize_answer(pred), normalize_answer(gold)
    if not a and not b:
        return 1.0
    return difflib.SequenceMatcher(None, a, b).ratio()


def overlap_learned_scorer(pred: str, gold: str) -> float:
    """Stand-in for a learned answer-comparison model on the 0-5 scale."""
    return 5.0 * token_f1(pred, gold)


def default_scorers() -> dict[str, Scorer]:
    return {"lexical_overlap": token_f1, "semantic_scorer": surface_similarity,
            "learned_scorer": overlap_learned_scorer}


# ---------------------------------------------------------------------------

@dataclass
class SpanVerdict:
    span_id: str
    score: float
    status: str
    questions_used: list[str] = field(default_factory=list)
    predicted_answers: list[dict] = field(default_factory=list)
    span_text: str = ""
    gold_label: int | None = None
    questions: list[dict] = field(default_factory=list)  # every generated question, kept or not
    components: list[dict] = field(default_factory=list)
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "span_id": self.span_id, "span_text": self.span_text, "score": self.score,
            "status": self.status, "gold": self.gold_label, "questions_used": self.questions_used,
            "predicted_answers": self.predicted_answers, "questions": self.questions,
            "components": self.components, "error": self.error,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SpanVerdict":
        score = rec["score"]
        return cls(rec["span_id"], float("nan") if score is None else float(score), rec["status"],
                   list(rec.get("questions_used", [])), list(rec.get("predicted_answers", [])),
                   rec.get("span_text", ""), rec.get("gold"), list(rec.get("questions", [])),
                   list(rec.get("components", [])), rec.get("error"))


@dataclass
class SummaryVerdict:
    pair_id: str
    score: float
    span_verdicts: list[SpanVerdict]
    summary_gold: int | None = None

    def to_record(self, metric: str) -> dict:
        return {"pair_id": self.pair_id, "metric": metric, "score": self.score,
                "summary_gold": self.summary_gold,
                "spans": [v.to_record() for v in self.span_verdicts]}


@dataclass
class RunReport:
    metric: str
    status_counts: Counter = field(default_factory=Counter)
    errors: list[str] = field(default_factory=list)
    excluded_pairs: list[str] = field(default_factory=list)
    n_questions: int = 0
    n_kept_questions: int = 0

    @property
    def filtered_rate(self) -> float:
        n = sum(self.status_counts.values())
        return self.status_counts["filtered"] / n if n else 0.0

    def as_dict(self) -> dict:
        return {"metric": self.metric, "status_counts": dict(sorted(self.status_counts.items())),
                "errors": self.errors, "excluded_pairs": self.excluded_pairs,
                "n_questions": self.n_questions, "n_kept_questions": self.n_kept_questions,
                "filtered_rate": self.filtered_rate}


# ---------------------------------------------------------------------------
# steps

def filter_questions(span: CandidateSpan, questions: Sequence[Question], qa_backend: Backend,
                     summary: str, answers: dict | None = None) -> tuple[list[Question], list[Question]]:
    """Keep questions whose summary-context answer equals the span text (normalized)."""
    kept, discarded = [], []
    target = normalize_answer(span.text)
    for q in questions:
        try:
            ans = qa_backend.answer(q.text, summary)
        except BackendError as exc:
            raise BackendError(f"question {q.question_id}: {exc}", exc.retryable, exc.attempts) from exc
        if answers is not None:
            answers[q.question_id] = ans
        if not ans.unanswerable and normalize_answer(ans.text) == target:
            kept.append(q)
        else:
            discarded.append(q)
    return kept, discarded


def _check_range(name: str, value: float, lo: float, hi: float) -> float:
    if not (lo - 1e-9 <= value <= hi + 1e-9) or math.isnan(value):
        raise ConfigError(f"scorer {name!r} returned {value} outside [{lo}, {hi}]")
    return value


def answer_components(predicted: Answer, expected: CandidateSpan, config: MetricConfig,
                      scorers: Mapping[str, Scorer]) -> dict:
    missing = [c for c in config.components if c != "answerability" and c not in scorers]
    if missing:
        raise ConfigError(f"missing scorer(s): {sorted(missing)}")
    if config.style == "QAFE":
        if predicted.unanswerable:
            return {"learned_scorer": None, "score": 0.0}
        val = _check_range("learned_scorer", float(scorers["learned_scorer"](predicted.text, expected.text)), 0.0, 5.0)
        return {"learned_scorer": val, "score": val}
    lex = _check_range("lexical_overlap", float(scorers["lexical_overlap"](predicted.text, expected.text)), 0.0, 1.0)
    sem = _check_range("semantic_scorer", float(scorers["semantic_scorer"](predicted.text, expected.text)), 0.0, 1.0)
    if predicted.unanswerable:
        lex = sem = 0.0
    prob = predicted.answerable_prob
    return {"lexical_overlap": lex, "semantic_scorer": sem, "answerability": prob,
            "score": (lex + sem + prob) / 3.0}


def compare_answers(predicted: Answer, expected_span: CandidateSpan, config: MetricConfig,
                    scorers: Mapping[str, Scorer] | None = None) -> float:
    return answer_components(predicted, expected_span, config, scorers or default_scorers())["score"]


def score_span(span: CandidateSpan, kept_questions: Sequence[Question], qa_backend: Backend,
               document: str, config: MetricConfig,
               scorers: Mapping[str, Scorer] | None = None) -> SpanVerdict:
    scorers = scorers or default_scorers()
    if not kept_questions:
        return SpanVerdict(span.span_id, config.filtered_span_sentinel, "filtered",
                           span_text=span.text, gold_label=span.gold_label)
    comps, answers = [], []
    for q in kept_questions:
        ans = qa_backend.answer(q.text, document)
        answers.append({"question_id": q.question_id, **ans.as_dict()})
        comps.append({"question_id": q.question_id, **answer_components(ans, span, config, scorers)})
    score = sum(c["score"] for c in comps) / len(comps)
    all_unanswerable = all(a["unanswerable"] for a in answers)
    status = "unanswerable" if config.style == "QAFE" and all_unanswerable else "scored"
    return SpanVerdict(span.span_id, score, status, [q.question_id for q in kept_questions], answers,
                       span.text, span.gold_label, components=comps)


def score_summary(pair_id: str, verdicts: Sequence[SpanVerdict], summary_gold: int | None = None) -> SummaryVerdict | None:
    usable = [v.score for v in verdicts if v.status != "errored"]
    if not usable:
        logger.warning("pair %s has no scorable spans; excluded", pair_id)
        return None
    return SummaryVerdict(pair_id, math.fsum(usable) / len(usable), list(verdicts), summary_gold)


# ---------------------------------------------------------------------------

def _run_pair(pair: AnnotatedPair, spans: Sequence[CandidateSpan], qg: Backend, qa: Backend,
              config: MetricConfig, scorers) -> list[SpanVerdict]:
    out = []
    for span in spans:
        try:
            questions = qg.generate(span, pair.summary)
            summary_answers: dict[str, Answer] = {}
            kept, _ = filter_questions(span, questions, qa, pair.summary, summary_answers)
            verdict = score_span(span, kept, qa, pair.document, config, scorers)
            kept_ids = {q.question_id for q in kept}
            verdict.questions = [
                {"question_id": q.question_id, "text": q.text, "provenance": q.provenance,
                 "kept": q.question_id in kept_ids, "summary_answer": summary_answers[q.question_id].as_dict()}
                for q in questions
            ]
        except (BackendError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            verdict = SpanVerdict(span.span_id, float("nan"), "errored", span_text=span.text,
                                  gold_label=span.gold_label, error=str(exc))
        out.append(verdict)
    return out


def run_pipeline(dataset: Dataset, spans: Mapping[str, Sequence[CandidateSpan]], qg_backend: Backend,
                 qa_backend: Backend, config: MetricConfig, scorers: Mapping[str, Scorer] | None = None,
                 max_workers: int | None = None) -> tuple[list[SummaryVerdict], RunReport]:
    scorers = scorers or default_scorers()
    missing = [c for c in config.components if c != "answerability" and c not in scorers]
    if missing:
        raise ConfigError(f"missing scorer(s): {sorted(missing)}")
    for pair in dataset:
        if pair.pair_id not in spans:
            raise ConfigError(f"no candidate spans for pair {pair.pair_id!r}")
    workers = max_workers or min(qg_backend.config.max_concurrency, qa_backend.config.max_concurrency)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {p.pair_id: pool.submit(_run_pair, p, spans[p.pair_id], qg_backend, qa_backend, config, scorers)
                   for p in dataset}
        by_pair = {pid: f.result() for pid, f in futures.items()}

    report = RunReport(config.style)
    verdicts = []
    for pair in dataset:
        span_verdicts = by_pair[pair.pair_id]
        for v in span_verdicts:
            report.status_counts[v.status] += 1
            report.n_questions += len(v.questions)
            report.n_kept_questions += sum(q["kept"] for q in v.questions)
            if v.error:
                report.errors.append(f"{v.span_id}: {v.error}")
        sv = score_summary(pair.pair_id, span_verdicts, derive_summary_gold(pair) if pair.tokens else None)
        if sv is None:
            report.excluded_pairs.append(pair.pair_id)
        else:
            verdicts.append(sv)
    return verdicts, report


# ---------------------------------------------------------------------------
# verdict dumps

def _clean(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def dump_verdicts(verdicts: Sequence[SummaryVerdict], metric: str, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sv in verdicts:
            fh.write(json.dumps(_clean(sv.to_record(metric)), sort_keys=True, ensure_ascii=False) + "\n")


def load_verdicts(path) -> tuple[str, list[SummaryVerdict]]:
    metric, out = "", []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            metric = rec.get("metric", metric)
            out.append(SummaryVerdict(rec["pair_id"], float(rec["score"]),
                                      [SpanVerdict.from_record(s) for s in rec["spans"]],
                                      rec.get("summary_gold")))
    return metric, out
