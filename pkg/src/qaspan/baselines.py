"""Token-level baselines: exact match, and externally produced (DAE-style) scores."""
from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .annotate import CandidateSpan
from .corpus import AnnotatedPair, Dataset, Token
from .text import normalize_token

logger = logging.getLogger(__name__)


class BaselineError(ValueError):
    pass


@dataclass
class TokenScoreSet:
    pair_id: str
    scores: dict[int, float]
    source: str = "EM"
    summary_score: float | None = None

    def __post_init__(self):
        if self.source not in ("EM", "external"):
            raise BaselineError(f"unknown source {self.source!r}")
        for i, s in self.scores.items():
            if not 0.0 <= s <= 1.0:
                raise BaselineError(f"pair {self.pair_id!r}: token {i} score {s} outside [0, 1]")


def _doc_words(document: str) -> set[str]:
    return {w for w in (normalize_token(t) for t in re.findall(r"\S+", document)) if w} | \
           {w for w in (normalize_token(t) for t in re.findall(r"[\w£$%]+", document)) if w}


def em_scores(pair: AnnotatedPair, em_tokens: Sequence[Token]) -> tuple[TokenScoreSet, float]:
    """Score 1 for each selected token whose normalized form is a word of the document."""
    index = {(t.start, t.end): i for i, t in enumerate(pair.tokens)}
    doc = _doc_words(pair.document)
    scores = {}
    for tok in em_tokens:
        w = normalize_token(tok.text)
        scores[index[(tok.start, tok.end)]] = 1.0 if (not w or w in doc) else 0.0
    if not scores:
        logger.warning("pair %s: no EM tokens selected; summary score set to 1", pair.pair_id)
        summary = 1.0
    else:
        summary = sum(scores.values()) / len(scores)
    return TokenScoreSet(pair.pair_id, scores, "EM", summary), summary


def token_scores_to_span_scores(token_scores: TokenScoreSet, spans: Sequence[CandidateSpan],
                                pair: AnnotatedPair, threshold: float = 0.5,
                                stats: Counter | None = None) -> dict[str, float]:
    """A span is non-factual (0) iff some overlapping scored token falls below ``threshold``."""
    out = {}
    for span in spans:
        if not (0 <= span.start < span.end <= len(pair.summary)):
            raise BaselineError(f"span {span.span_id!r} lies outside the summary of {pair.pair_id!r}")
        labels = [
            1 if token_scores.scores[i] >= threshold else 0
            for i, tok in enumerate(pair.tokens)
            if i in token_scores.scores and tok.start < span.end and span.start < tok.end
        ]
        if not labels:
            if stats is not None:
                stats["spans_without_scored_tokens"] += 1
            out[span.span_id] = 1.0
        else:
            out[span.span_id] = float(min(labels))
    return out


def token_digest(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:12]


def load_external_token_scores(path, dataset: Dataset) -> list[TokenScoreSet]:
    """Read ``{"pair_id", "scores", "token_digests"}`` lines aligned to ``dataset``."""
    pairs = dataset.by_id()
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                rec = json.loads(line)
                pid, scores, digests = rec["pair_id"], rec["scores"], rec["token_digests"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise BaselineError(f"{where}: malformed record ({exc})") from None
            if pid not in pairs:
                raise BaselineError(f"{where}: unknown pair_id {pid!r}")
            toks = pairs[pid].tokens
            expected = [token_digest(t.text) for t in toks]
            n = min(len(expected), len(digests))
            bad = next((i for i in range(n) if expected[i] != digests[i]), None)
            if bad is None and len(expected) != len(digests):
                bad = n
            if bad is not None:
                raise BaselineError(f"{where}: token alignment for {pid!r} diverges at index {bad} "
                                    f"({len(digests)} digests vs {len(expected)} tokens)")
            if len(scores) != len(toks):
                raise BaselineError(f"{where}: {len(scores)} scores for {len(toks)} tokens")
            if any(not (0.0 <= float(s) <= 1.0) for s in scores):
                raise BaselineError(f"{where}: scores outside [0, 1]")
            summary = rec.get("summary_score")
            scores_map = {i: float(s) for i, s in enumerate(scores)}
            if summary is None:
                summary = min(scores_map.values()) if scores_map else 1.0
            out.append(TokenScoreSet(pid, scores_map, "external", float(summary)))
    return out


def save_external_token_scores(sets: Sequence[TokenScoreSet], dataset: Dataset, path) -> None:
    pairs = dataset.by_id()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in sets:
            toks = pairs[s.pair_id].tokens
            rec = {"pair_id": s.pair_id, "scores": [s.scores.get(i, 1.0) for i in range(len(toks))],
                   "token_digests": [token_digest(t.text) for t in toks]}
            if s.summary_score is not None:
                rec["summary_score"] = s.summary_score
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class BaselineRun:
    """Summary and span scores of a token-level system over a dataset."""

    name: str
    summary_scores: dict[str, float] = field(default_factory=dict)
    span_scores: dict[str, dict[str, float]] = field(default_factory=dict)
    token_sets: dict[str, TokenScoreSet] = field(default_factory=dict)
    stats: Counter = field(default_factory=Counter)


def run_em(dataset: Dataset, spans: Mapping[str, Sequence[CandidateSpan]], annotator=None) -> BaselineRun:
    from .annotate import select_em_tokens

    run = BaselineRun("EM")
    for pair in dataset:
        ts, summary = em_scores(pair, select_em_tokens(pair, annotator))
        run.token_sets[pair.pair_id] = ts
        run.summary_scores[pair.pair_id] = summary
        run.span_scores[pair.pair_id] = token_scores_to_span_scores(ts, spans[pair.pair_id], pair, 0.5, run.stats)
    return run


def run_external(name: str, sets: Sequence[TokenScoreSet], dataset: Dataset,
                 spans: Mapping[str, Sequence[CandidateSpan]], threshold: float = 0.5) -> BaselineRun:
    """Span scores use the binarization ``threshold``; tune it on validation data."""
    run = BaselineRun(name)
    pairs = dataset.by_id()
    for s in sets:
        pair = pairs[s.pair_id]
        run.token_sets[s.pair_id] = s
        run.summary_scores[s.pair_id] = s.summary_score if s.summary_score is not None else 1.0
        run.span_scores[s.pair_id] = token_scores_to_span_scores(s, spans[s.pair_id], pair, threshold, run.stats)
    return run
