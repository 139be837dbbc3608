"""Candidate answer spans (NPs and NEs) and POS-filtered tokens for exact match."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import POS_TAGS, UPOS_TO_COARSE, AnnotatedPair, CorpusError, Token, derive_span_gold

EM_POS = frozenset({"noun", "proper-noun", "number", "adjective", "pronoun"})
CAPABILITIES = frozenset({"np_chunking", "ner", "pos_tagging"})


class AnnotationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidateSpan:
    span_id: str
    start: int
    end: int
    text: str
    kind: str  # "NE" or "NP"
    label: str = ""  # entity type for NEs (PERSON, GPE, DATE, ...)
    gold_label: int = 1


@dataclass(frozen=True)
class RawSpan:
    start: int
    end: int
    kind: str
    label: str = ""


@dataclass
class PairAnnotation:
    spans: list[RawSpan] = field(default_factory=list)
    pos: list[tuple[int, int, str]] = field(default_factory=list)


class Annotator:
    """Base class for linguistic annotators.

    Subclasses set ``provider_id`` and ``capabilities`` and implement
    :meth:`annotate`. Non-reentrant providers are serialized by a lock.
    """

    provider_id = "base"
    capabilities: frozenset = frozenset()
    reentrant = True

    def __init__(self):
        self._lock = threading.Lock()

    def annotate(self, pair: AnnotatedPair) -> PairAnnotation:
        raise NotImplementedError

    def __call__(self, pair: AnnotatedPair) -> PairAnnotation:
        try:
            if self.reentrant:
                return self.annotate(pair)
            with self._lock:
                return self.annotate(pair)
        except AnnotationError:
            raise
        except Exception as exc:
            raise AnnotationError(f"annotator {self.provider_id!r} failed on {pair.pair_id!r}: {exc}") from exc


_SMOKE = "John Smith visited London in 2019."


def smoke_pair() -> AnnotatedPair:
    words = [("John", "proper-noun"), ("Smith", "proper-noun"), ("visited", "verb"),
             ("London", "proper-noun"), ("in", "adposition"), ("2019", "number"), (".", "punctuation")]
    toks, pos = [], 0
    for w, p in words:
        start = _SMOKE.index(w, pos)
        toks.append(Token(w, start, start + len(w), p))
        pos = start + len(w)
    return AnnotatedPair("__smoke__", _SMOKE, _SMOKE, toks)


def register_annotator(annotator: Annotator, probe: AnnotatedPair | None = None) -> Annotator:
    """Check that every declared capability yields output on a probe pair."""
    unknown = set(annotator.capabilities) - CAPABILITIES
    if unknown:
        raise AnnotationError(f"unknown capabilities {sorted(unknown)}")
    ann = annotator(probe or smoke_pair())
    if {"np_chunking", "ner"} & annotator.capabilities and not ann.spans:
        raise AnnotationError(f"{annotator.provider_id}: declared span capabilities produced no spans")
    if "pos_tagging" in annotator.capabilities and not ann.pos:
        raise AnnotationError(f"{annotator.provider_id}: declared pos_tagging produced no tags")
    return annotator


class ReplayAnnotator(Annotator):
    provider_id = "replay"
    capabilities = CAPABILITIES

    def __init__(self, cache: dict[str, PairAnnotation], source: str = ""):
        super().__init__()
        self.cache = cache
        self.source = source

    def annotate(self, pair: AnnotatedPair) -> PairAnnotation:
        if pair.pair_id not in self.cache:
            raise AnnotationError(f"pair {pair.pair_id!r} not in annotation cache {self.source}")
        ann = self.cache[pair.pair_id]
        n = len(pair.summary)
        for s in ann.spans:
            if not (0 <= s.start < s.end <= n):
                raise AnnotationError(f"pair {pair.pair_id!r}: span [{s.start}, {s.end}) out of range")
        return ann

    def pair_ids(self) -> list[str]:
        return list(self.cache)


class SpacyAnnotator(Annotator):
    """Live annotator backed by a spaCy pipeline (optional dependency)."""

    provider_id = "spacy"
    capabilities = CAPABILITIES
    reentrant = False

    def __init__(self, model: str = "en_core_web_sm"):
        super().__init__()
        import spacy  # noqa: PLC0415

        self.nlp = spacy.load(model)
        self.provider_id = f"spacy:{model}"

    def annotate(self, pair: AnnotatedPair) -> PairAnnotation:
        doc = self.nlp(pair.summary)
        spans = [RawSpan(e.start_char, e.end_char, "NE", e.label_) for e in doc.ents]
        spans += [RawSpan(c.start_char, c.end_char, "NP") for c in doc.noun_chunks]
        pos = [(t.idx, t.idx + len(t.text), UPOS_TO_COARSE.get(t.pos_, "other")) for t in doc
               if not t.is_space]
        return PairAnnotation(spans, pos)


# ---------------------------------------------------------------------------

def extract_candidate_spans(pair: AnnotatedPair, annotator: Annotator) -> list[CandidateSpan]:
    if not {"np_chunking", "ner"} <= set(annotator.capabilities):
        raise AnnotationError(f"annotator {annotator.provider_id!r} lacks np_chunking/ner")
    raw = annotator(pair).spans
    merged: dict[tuple[int, int], RawSpan] = {}
    for s in raw:
        key = (s.start, s.end)
        if key not in merged or (s.kind == "NE" and merged[key].kind != "NE"):
            merged[key] = s
    out = []
    for (start, end), s in sorted(merged.items()):
        span = CandidateSpan(f"{pair.pair_id}:{start}-{end}", start, end,
                             pair.summary[start:end], s.kind, s.label)
        out.append(CandidateSpan(span.span_id, start, end, span.text, s.kind, s.label,
                                 derive_span_gold(span, pair)))
    return out


def select_em_tokens(pair: AnnotatedPair, annotator: Annotator | None = None) -> list[Token]:
    """Tokens whose coarse POS is noun, proper noun, number, adjective or pronoun."""
    tags = {}
    if annotator is not None and "pos_tagging" in annotator.capabilities:
        tags = {(s, e): p for s, e, p in annotator(pair).pos}
    out = []
    for tok in pair.tokens:
        pos = tags.get((tok.start, tok.end), tok.pos)
        if not pos:
            raise AnnotationError(f"pair {pair.pair_id!r}: no POS for token {tok.text!r}")
        if pos in EM_POS:
            out.append(tok)
    return out


# ---------------------------------------------------------------------------
# annotation cache

def annotation_record(pair_id: str, ann: PairAnnotation) -> dict:
    return {
        "pair_id": pair_id,
        "spans": [{"start": s.start, "end": s.end, "kind": s.kind, "label": s.label} for s in ann.spans],
        "pos": [{"start": a, "end": b, "pos": p} for a, b, p in ann.pos],
    }


def save_annotations(annotations: dict[str, PairAnnotation], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pid, ann in annotations.items():
            fh.write(json.dumps(annotation_record(pid, ann), sort_keys=True) + "\n")


def load_precomputed_annotations(path, dataset: Iterable[AnnotatedPair] | None = None) -> ReplayAnnotator:
    path = Path(path)
    cache: dict[str, PairAnnotation] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                spans = [RawSpan(int(s["start"]), int(s["end"]), s["kind"], s.get("label", ""))
                         for s in rec["spans"]]
                pos = [(int(p["start"]), int(p["end"]), p["pos"]) for p in rec.get("pos", [])]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"{path}: line {lineno}: malformed record ({exc})") from None
            for s in spans:
                if s.kind not in ("NE", "NP"):
                    raise AnnotationError(f"{path}: line {lineno}: bad span kind {s.kind!r}")
            for _, _, p in pos:
                if p not in POS_TAGS:
                    raise AnnotationError(f"{path}: line {lineno}: bad POS tag {p!r}")
            cache[rec["pair_id"]] = PairAnnotation(spans, pos)
    if dataset is not None:
        pairs = {p.pair_id: p for p in dataset}
        for pid, ann in cache.items():
            if pid not in pairs:
                raise AnnotationError(f"{path}: unknown pair_id {pid!r}")
            n = len(pairs[pid].summary)
            for s in ann.spans:
                if not (0 <= s.start < s.end <= n):
                    raise AnnotationError(f"{path}: pair {pid!r} span [{s.start}, {s.end}) out of range")
    return ReplayAnnotator(cache, str(path))


def extract_all(dataset: Iterable[AnnotatedPair], annotator: Annotator) -> dict[str, list[CandidateSpan]]:
    try:
        return {p.pair_id: extract_candidate_spans(p, annotator) for p in dataset}
    except CorpusError as exc:
        raise AnnotationError(str(exc)) from exc
