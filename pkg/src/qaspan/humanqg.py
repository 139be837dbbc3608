"""Human-written questions in place of automatic QG.

Each candidate span carries a shortest question, a longest question and any
number of intermediate ones. Localization is evaluated per length
configuration (short, intermediate, long) and with an oracle that picks, per
span, the question giving the best outcome under the gold label.
"""
from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analysis import detect_inherited_errors, length_bucket_inheritance
from .annotate import CandidateSpan
from .backends import Backend, BackendError, Question
from .corpus import AnnotatedPair, Dataset, derive_summary_gold, split_dataset
from .eval import ScoredItem, candidate_thresholds, evaluate_f1, tune_threshold
from .pipeline import MetricConfig, Scorer, compare_answers, default_scorers, filter_questions

logger = logging.getLogger(__name__)

MODES = ("short", "intermediate", "long", "oracle")


class HumanQGError(ValueError):
    pass


@dataclass
class HumanQuestionSet:
    pair_id: str
    span_id: str
    shortest: Question | None = None
    longest: Question | None = None
    intermediates: list[Question] = field(default_factory=list)
    discarded: bool = False

    def validate(self) -> None:
        if self.discarded:
            return
        if self.shortest is None or self.longest is None:
            raise HumanQGError(f"span {self.span_id!r}: shortest and longest questions are required")
        if len(self.shortest.text.split()) > len(self.longest.text.split()):
            raise HumanQGError(f"span {self.span_id!r}: shortest question is longer than the longest")

    def all_questions(self) -> list[Question]:
        if self.discarded:
            return []
        return [self.shortest, *self.intermediates, self.longest]


_BUCKET_PROV = {"shortest": "human_short", "intermediate": "human_intermediate", "longest": "human_long"}


def load_human_questions(path, dataset: Dataset,
                         spans: Mapping[str, Sequence[CandidateSpan]]) -> list[HumanQuestionSet]:
    pairs = dataset.by_id()
    known = {s.span_id: pid for pid, ss in spans.items() for s in ss}
    sets: dict[str, HumanQuestionSet] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                rec = json.loads(line)
                pid, sid = rec["pair_id"], rec["span_id"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise HumanQGError(f"{where}: malformed record ({exc})") from None
            if pid not in pairs:
                raise HumanQGError(f"{where}: unknown pair {pid!r}")
            if known.get(sid) != pid:
                raise HumanQGError(f"{where}: unknown span {sid!r} for pair {pid!r}")
            hs = sets.setdefault(sid, HumanQuestionSet(pid, sid))
            if rec.get("discarded"):
                hs.discarded = True
                continue
            bucket, text = rec.get("bucket"), rec.get("question", "")
            if bucket not in _BUCKET_PROV or not text.strip():
                raise HumanQGError(f"{where}: bad bucket {bucket!r} or empty question")
            if bucket == "intermediate":
                q = Question(f"{sid}#h-int{len(hs.intermediates)}", text, sid, _BUCKET_PROV[bucket])
                hs.intermediates.append(q)
            else:
                q = Question(f"{sid}#h-{bucket}", text, sid, _BUCKET_PROV[bucket])
                if getattr(hs, bucket) is not None:
                    raise HumanQGError(f"{where}: duplicate {bucket} question for span {sid!r}")
                setattr(hs, bucket, q)
    out = list(sets.values())
    for hs in out:
        hs.validate()
    totals = human_question_totals(out)
    logger.info("loaded human questions: %(summaries)d summaries, %(spans)d spans, %(questions)d questions", totals)
    return out


def human_question_totals(sets: Sequence[HumanQuestionSet]) -> dict:
    live = [s for s in sets if not s.discarded]
    return {"summaries": len({s.pair_id for s in live}), "spans": len(live),
            "questions": sum(len(s.all_questions()) for s in live),
            "discarded_spans": sum(s.discarded for s in sets)}


def save_human_questions(sets: Sequence[HumanQuestionSet], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for hs in sets:
            if hs.discarded:
                fh.write(json.dumps({"pair_id": hs.pair_id, "span_id": hs.span_id, "discarded": True}) + "\n")
                continue
            for bucket, q in [("shortest", hs.shortest), *[("intermediate", q) for q in hs.intermediates],
                              ("longest", hs.longest)]:
                fh.write(json.dumps({"pair_id": hs.pair_id, "span_id": hs.span_id, "bucket": bucket,
                                     "question": q.text}, ensure_ascii=False) + "\n")


def import_released_annotations(records: Iterable[dict], spans: Mapping[str, Sequence[CandidateSpan]]) -> list[dict]:
    """Flatten per-summary annotation records into the line format.

    Input records look like ``{"pair_id", "spans": [{"start", "end",
    "discard"?, "shortest", "intermediate": [...], "longest"}]}``; spans are
    matched to candidate spans by character offsets.
    """
    lines = []
    for rec in records:
        pid = rec["pair_id"]
        by_offsets = {(s.start, s.end): s.span_id for s in spans.get(pid, [])}
        for sp in rec["spans"]:
            sid = by_offsets.get((sp["start"], sp["end"]))
            if sid is None:
                raise HumanQGError(f"pair {pid!r}: no candidate span at [{sp['start']}, {sp['end']})")
            if sp.get("discard"):
                lines.append({"pair_id": pid, "span_id": sid, "discarded": True})
                continue
            lines.append({"pair_id": pid, "span_id": sid, "bucket": "shortest", "question": sp["shortest"]})
            for q in sp.get("intermediate", []):
                lines.append({"pair_id": pid, "span_id": sid, "bucket": "intermediate", "question": q})
            lines.append({"pair_id": pid, "span_id": sid, "bucket": "longest", "question": sp["longest"]})
    return lines


# ---------------------------------------------------------------------------

def _rng(seed: int, span_id: str, mode: str) -> random.Random:
    # seeded per (span, mode) so sampling is independent of processing order
    return random.Random(f"{seed}:{span_id}:{mode}")


def select_configuration(hs: HumanQuestionSet, mode: str, seed: int = 0) -> list[Question]:
    if hs.discarded:
        raise HumanQGError(f"span {hs.span_id!r} was discarded by the annotator")
    if mode == "short":
        return [hs.shortest]
    if mode == "long":
        return [hs.longest]
    if mode != "intermediate":
        raise HumanQGError(f"unknown mode {mode!r}")
    rng = _rng(seed, hs.span_id, mode)
    pool = hs.intermediates
    if len(pool) > 3:
        return rng.sample(pool, 3)
    if len(pool) == 3:
        return list(pool)
    if pool:
        return list(pool) + [rng.choice(pool) for _ in range(3 - len(pool))]
    return [rng.choice([hs.shortest, hs.longest]) for _ in range(3)]


def oracle_select(candidates: Sequence[Question], scores: Mapping[str, float], span_gold: int) -> Question:
    """Highest-scoring question for factual spans, lowest for non-factual; ties go to the shorter."""
    scored = [q for q in candidates if q.question_id in scores]
    if not scored:
        raise HumanQGError("no scored questions to choose from")
    sign = -1.0 if span_gold == 1 else 1.0
    return min(scored, key=lambda q: (sign * scores[q.question_id], len(q.text.split()), q.question_id))


# ---------------------------------------------------------------------------

@dataclass
class HumanQGResult:
    thresholds: dict[str, float]
    reports: dict[str, object]  # mode -> EvalReport on the test half
    span_scores: dict[str, dict[str, float]]  # mode -> span_id -> score
    question_scores: dict[str, float]
    span_gold: dict[str, int]
    span_pair: dict[str, str]
    validation_pairs: list[str]
    test_pairs: list[str]
    length_stats: dict
    inherited_by_bucket: dict
    inherited_by_length: list[dict]
    errors: list[str] = field(default_factory=list)

    def items(self, mode: str, pair_ids=None) -> list[ScoredItem]:
        keep = None if pair_ids is None else set(pair_ids)
        return [ScoredItem(sid, score, self.span_gold[sid], self.span_pair[sid])
                for sid, score in sorted(self.span_scores[mode].items())
                if keep is None or self.span_pair[sid] in keep]

    def correct_counts(self, mode: str, thresholds: Iterable[float]) -> list[int]:
        items = self.items(mode)
        s = np.array([it.score for it in items])
        g = np.array([it.gold for it in items])
        return [int(np.sum((s >= t) == (g == 1))) for t in thresholds]


def score_question(question: Question, span: CandidateSpan, pair: AnnotatedPair, qa: Backend,
                   config: MetricConfig, scorers: Mapping[str, Scorer]) -> float:
    """Steps 3-5 for one question: sentinel if filtered, else the answer comparison score."""
    kept, _ = filter_questions(span, [question], qa, pair.summary)
    if not kept:
        return config.filtered_span_sentinel
    return compare_answers(qa.answer(question.text, pair.document), span, config, scorers)


def run_humanqg_eval(dataset: Dataset, question_sets: Sequence[HumanQuestionSet],
                     spans: Mapping[str, Sequence[CandidateSpan]], qa_backend: Backend,
                     config: MetricConfig | None = None, modes: Sequence[str] = MODES, seed: int = 0,
                     scorers: Mapping[str, Scorer] | None = None) -> HumanQGResult:
    config = config or MetricConfig.qafe()
    scorers = scorers or default_scorers()
    pairs = dataset.by_id()
    span_by_id = {s.span_id: s for ss in spans.values() for s in ss}
    live = [hs for hs in question_sets if not hs.discarded]
    for hs in live:
        if hs.span_id not in span_by_id:
            raise HumanQGError(f"unknown span {hs.span_id!r}")
        if "oracle" in modes and span_by_id[hs.span_id].gold_label not in (0, 1):
            raise HumanQGError(f"oracle mode needs a gold label for span {hs.span_id!r}")

    q_scores: dict[str, float] = {}
    errors = []
    for hs in live:
        span, pair = span_by_id[hs.span_id], pairs[hs.pair_id]
        for q in hs.all_questions():
            try:
                q_scores[q.question_id] = score_question(q, span, pair, qa_backend, config, scorers)
            except BackendError as exc:
                errors.append(f"{q.question_id}: {exc}")

    span_scores: dict[str, dict[str, float]] = {m: {} for m in modes}
    for hs in live:
        gold = span_by_id[hs.span_id].gold_label
        for mode in modes:
            if mode == "oracle":
                qs = [q for q in hs.all_questions() if q.question_id in q_scores]
                if qs:
                    span_scores[mode][hs.span_id] = q_scores[oracle_select(qs, q_scores, gold).question_id]
                continue
            qs = [q for q in select_configuration(hs, mode, seed) if q.question_id in q_scores]
            if not qs:
                continue
            vals = [q_scores[q.question_id] for q in qs]
            span_scores[mode][hs.span_id] = float(np.mean(vals))

    covered = sorted({hs.pair_id for hs in live})
    sub = Dataset(dataset.name, [pairs[p] for p in covered])
    val, test = split_dataset(sub, seed)
    val_ids, test_ids = [p.pair_id for p in val], [p.pair_id for p in test]
    span_gold = {hs.span_id: span_by_id[hs.span_id].gold_label for hs in live}
    span_pair = {hs.span_id: hs.pair_id for hs in live}

    result = HumanQGResult({}, {}, span_scores, q_scores, span_gold, span_pair, val_ids, test_ids,
                           {}, {}, [], errors)
    for mode in modes:
        val_items = result.items(mode, val_ids)
        test_items = result.items(mode, test_ids)
        t = tune_threshold(val_items)[0] if val_items else 0.0
        result.thresholds[mode] = t
        result.reports[mode] = evaluate_f1(test_items, t, level="span") if test_items else None

    # question length and inherited-error statistics (non-factual summaries only)
    by_bucket = defaultdict(list)
    all_q = []
    for hs in live:
        pair = pairs[hs.pair_id]
        for q in hs.all_questions():
            all_q.append((q, pair))
            if derive_summary_gold(pair) == 0:
                by_bucket[q.provenance].append(q)
    result.length_stats = {
        b: round(float(np.mean([len(q.text.split()) for q in qs])), 1) for b, qs in sorted(by_bucket.items())
    }
    result.inherited_by_bucket = {
        b: round(100.0 * float(np.mean([detect_inherited_errors(q, pairs[span_pair[q.target_span_id]]).category != "none"
                                  for q in qs])), 1)
        for b, qs in sorted(by_bucket.items())
    }
    result.inherited_by_length = length_bucket_inheritance(all_q)
    return result


def common_thresholds(result: HumanQGResult) -> list[float]:
    scores = [s for m in result.span_scores.values() for s in m.values()]
    return candidate_thresholds(scores) if scores else []


def build_nested_question_sets(dataset: Dataset, spans: Mapping[str, Sequence[CandidateSpan]],
                               windows: Sequence[int | None] = (1, 3, 5, None)) -> list[HumanQuestionSet]:
    """Synthetic "human" question sets from the stub generator at growing context windows.

    Longer questions are token supersets of shorter ones. Pronoun spans are
    discarded, as an annotator would.
    """
    from .backends import StubBackend, BackendConfig, wh_word

    stub = StubBackend(BackendConfig())
    out = []
    for pair in dataset:
        pos_by_offset = {(t.start, t.end): t.pos for t in pair.tokens}
        for span in spans[pair.pair_id]:
            if pos_by_offset.get((span.start, span.end)) == "pronoun":
                out.append(HumanQuestionSet(pair.pair_id, span.span_id, discarded=True))
                continue
            texts = []
            for w in windows:
                t = stub.question_for(span.start, span.end, wh_word(span), pair.summary, w)
                if t not in texts:
                    texts.append(t)
            sid = span.span_id
            hs = HumanQuestionSet(
                pair.pair_id, sid,
                shortest=Question(f"{sid}#h-shortest", texts[0], sid, "human_short"),
                longest=Question(f"{sid}#h-longest", texts[-1], sid, "human_long"),
                intermediates=[Question(f"{sid}#h-int{i}", t, sid, "human_intermediate")
                               for i, t in enumerate(texts[1:-1])],
            )
            hs.validate()
            out.append(hs)
    return out
