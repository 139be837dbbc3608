"""Annotated factuality corpora: loading, gold labels, splits and statistics."""
from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .annotate import CandidateSpan

logger = logging.getLogger(__name__)

POS_TAGS = (
    "noun", "proper-noun", "number", "adjective", "pronoun", "verb",
    "auxiliary", "adposition", "punctuation", "particle", "other",
)
ERROR_TYPES = ("none", "extrinsic", "intrinsic", "world_knowledge")

# Universal Dependencies tags -> coarse tagset.
UPOS_TO_COARSE = {
    "NOUN": "noun", "PROPN": "proper-noun", "NUM": "number", "ADJ": "adjective",
    "PRON": "pronoun", "VERB": "verb", "AUX": "auxiliary", "ADP": "adposition",
    "PUNCT": "punctuation", "PART": "particle",
}


class CorpusError(ValueError):
    """Raised for malformed dataset records or label derivation failures."""


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    pos: str
    gold_label: int = 1
    error_type: str = "none"

    @property
    def analysis_error_type(self) -> str:
        # world-knowledge errors count as extrinsic in every analysis
        return "extrinsic" if self.error_type == "world_knowledge" else self.error_type


@dataclass
class AnnotatedPair:
    pair_id: str
    document: str
    summary: str
    tokens: list[Token]
    dataset_name: str = ""
    model_name: str = ""

    def validate(self) -> None:
        prev_end = 0
        for i, tok in enumerate(self.tokens):
            where = f"pair {self.pair_id!r} token {i} ({tok.text!r})"
            if not (0 <= tok.start < tok.end <= len(self.summary)):
                raise CorpusError(f"{where}: offsets [{tok.start}, {tok.end}) out of range")
            if self.summary[tok.start:tok.end] != tok.text:
                raise CorpusError(
                    f"{where}: text does not match summary substring "
                    f"{self.summary[tok.start:tok.end]!r}"
                )
            if tok.start < prev_end:
                raise CorpusError(f"{where}: tokens overlap or are out of order")
            if tok.pos not in POS_TAGS:
                raise CorpusError(f"{where}: unknown POS tag {tok.pos!r}")
            if tok.error_type not in ERROR_TYPES:
                raise CorpusError(f"{where}: unknown error type {tok.error_type!r}")
            if tok.gold_label not in (0, 1):
                raise CorpusError(f"{where}: label must be 0 or 1")
            if (tok.gold_label == 1) != (tok.error_type == "none"):
                raise CorpusError(f"{where}: label {tok.gold_label} inconsistent with error type {tok.error_type!r}")
            prev_end = tok.end

    def overlapping_tokens(self, start: int, end: int) -> list[Token]:
        return [t for t in self.tokens if t.start < end and start < t.end]


@dataclass
class Dataset:
    name: str
    pairs: list[AnnotatedPair] = field(default_factory=list)

    def __post_init__(self):
        ids = [p.pair_id for p in self.pairs]
        dupes = [k for k, n in Counter(ids).items() if n > 1]
        if dupes:
            raise CorpusError(f"duplicate pair_id(s) in dataset {self.name!r}: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def get(self, pair_id: str) -> AnnotatedPair:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise KeyError(pair_id)

    def by_id(self) -> dict[str, AnnotatedPair]:
        return {p.pair_id: p for p in self.pairs}


@dataclass(frozen=True)
class GoldLabels:
    summary_gold: int
    span_gold: dict[str, int]

    def __post_init__(self):
        if self.summary_gold == 1 and any(v == 0 for v in self.span_gold.values()):
            raise CorpusError("factual summary cannot contain a non-factual span")


# ---------------------------------------------------------------------------
# serialization

def _pair_from_record(rec: dict) -> AnnotatedPair:
    for key in ("pair_id", "document", "summary", "tokens"):
        if key not in rec:
            raise CorpusError(f"missing field {key!r}")
    tokens = []
    for i, t in enumerate(rec["tokens"]):
        try:
            tokens.append(Token(
                text=t["text"], start=int(t["start"]), end=int(t["end"]), pos=t["pos"],
                gold_label=int(t["label"]), error_type=t.get("error_type", "none"),
            ))
        except KeyError as exc:
            raise CorpusError(f"token {i}: missing field {exc.args[0]!r}") from None
    pair = AnnotatedPair(
        pair_id=str(rec["pair_id"]), document=rec["document"], summary=rec["summary"],
        tokens=tokens, dataset_name=rec.get("dataset", ""), model_name=rec.get("model", ""),
    )
    pair.validate()
    return pair


def pair_to_record(pair: AnnotatedPair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "dataset": pair.dataset_name,
        "model": pair.model_name,
        "document": pair.document,
        "summary": pair.summary,
        "tokens": [
            {"text": t.text, "start": t.start, "end": t.end, "pos": t.pos,
             "label": t.gold_label, "error_type": t.error_type}
            for t in pair.tokens
        ],
    }


def load_dataset(path, format_id: str = "native_jsonl", name: str | None = None) -> Dataset:
    """Read a JSON-lines dataset file.

    Every bad record is collected and reported together in a single
    ``CorpusError`` (one ``line N: ...`` entry per record).
    """
    if format_id != "native_jsonl":
        raise CorpusError(f"unsupported format {format_id!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    pairs, errors = [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                pairs.append(_pair_from_record(json.loads(line)))
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
            except (CorpusError, TypeError, ValueError) as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        raise CorpusError(f"{path}: {len(errors)} invalid record(s)\n" + "\n".join(errors))
    if not pairs:
        logger.warning("dataset %s is empty", path)
    ds_name = name or (pairs[0].dataset_name if pairs and pairs[0].dataset_name else path.stem)
    return Dataset(ds_name, pairs)


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pair in dataset.pairs:
            fh.write(json.dumps(pair_to_record(pair), ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# converters from word-level releases

_NO_SPACE_BEFORE = {".", ",", "!", "?", ";", ":", "'s", "n't", ")", "%", "'"}


def tokens_from_words(words: Sequence[str], labels: Sequence[int], pos: Sequence[str],
                      error_types: Sequence[str] | None = None) -> tuple[str, list[Token]]:
    """Detokenize word lists into a summary string plus offset-bearing tokens."""
    if not (len(words) == len(labels) == len(pos)):
        raise CorpusError("words, labels and pos must have equal length")
    if error_types is None:
        error_types = ["none" if int(l) == 1 else "extrinsic" for l in labels]
    text, tokens = "", []
    for w, lab, p, et in zip(words, labels, pos, error_types):
        if text and w not in _NO_SPACE_BEFORE and not text.endswith("("):
            text += " "
        start = len(text)
        text += w
        p = UPOS_TO_COARSE.get(p, p if p in POS_TAGS else "other")
        lab = int(lab)
        et = et if lab == 0 else "none"
        if lab == 0 and et == "none":
            et = "extrinsic"
        tokens.append(Token(w, start, len(text), p, lab, et))
    return text, tokens


_CLIFF_ERR = {"extrinsic": "extrinsic", "intrinsic": "intrinsic", "world knowledge": "world_knowledge",
              "world_knowledge": "world_knowledge", "correct": "none", "": "none"}


def convert_cliff(records: Iterable[dict], dataset_name: str = "cliff") -> Dataset:
    """Convert CLIFF-style word-level records.

    Expected keys per record: ``id``, ``document``, ``summary_words``,
    ``pos``, ``labels`` (per-word error type strings, "correct" for factual)
    and optionally ``model``.
    """
    pairs = []
    for rec in records:
        etypes = [_CLIFF_ERR[str(x).lower()] for x in rec["labels"]]
        labels = [1 if e == "none" else 0 for e in etypes]
        summary, tokens = tokens_from_words(rec["summary_words"], labels, rec["pos"], etypes)
        pair = AnnotatedPair(str(rec["id"]), rec["document"], summary, tokens,
                             dataset_name, rec.get("model", ""))
        pair.validate()
        pairs.append(pair)
    return Dataset(dataset_name, pairs)


def convert_gd21(records: Iterable[dict], dataset_name: str = "gd21") -> Dataset:
    """Convert GD21-style records (binary per-word labels, 1 = factual).

    Expected keys: ``id``, ``article``, ``summary_words``, ``pos``,
    ``word_labels`` and optionally ``error_types``.
    """
    pairs = []
    for rec in records:
        summary, tokens = tokens_from_words(rec["summary_words"], rec["word_labels"], rec["pos"],
                                            rec.get("error_types"))
        pair = AnnotatedPair(str(rec["id"]), rec["article"], summary, tokens,
                             dataset_name, rec.get("model", "bart"))
        pair.validate()
        pairs.append(pair)
    return Dataset(dataset_name, pairs)


# ---------------------------------------------------------------------------
# gold labels

def derive_summary_gold(pair: AnnotatedPair) -> int:
    if not pair.tokens:
        raise CorpusError(f"pair {pair.pair_id!r} has no tokens")
    return int(all(t.gold_label == 1 for t in pair.tokens))


def derive_span_gold(span: "CandidateSpan", pair: AnnotatedPair) -> int:
    if not (0 <= span.start < span.end <= len(pair.summary)):
        raise CorpusError(f"span {span.span_id!r} lies outside summary of {pair.pair_id!r}")
    covered = pair.overlapping_tokens(span.start, span.end)
    if not covered:
        raise CorpusError(f"span {span.span_id!r} overlaps no annotated token in {pair.pair_id!r}")
    return int(all(t.gold_label == 1 for t in covered))


def gold_labels(pair: AnnotatedPair, spans: Sequence["CandidateSpan"]) -> GoldLabels:
    return GoldLabels(derive_summary_gold(pair), {s.span_id: derive_span_gold(s, pair) for s in spans})


def split_dataset(dataset: Dataset, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then halve; the validation half gets the extra pair."""
    if len(dataset) < 2:
        raise CorpusError("need at least 2 pairs to split")
    order = list(range(len(dataset)))
    random.Random(seed).shuffle(order)
    cut = (len(order) + 1) // 2
    val = [dataset.pairs[i] for i in sorted(order[:cut])]
    test = [dataset.pairs[i] for i in sorted(order[cut:])]
    return Dataset(f"{dataset.name}-validation", val), Dataset(f"{dataset.name}-test", test)


# ---------------------------------------------------------------------------
# statistics

@dataclass
class StatsReport:
    dataset: str
    total_summaries: int = 0
    pct_nonfactual_summaries: float = 0.0
    spans_per_summary: float = 0.0
    pct_nonfactual_spans: float = 0.0
    tokens_per_summary: float = 0.0
    pct_nonfactual_tokens: float = 0.0
    pct_ignored_nonfactual_tokens: float = 0.0
    ignored_pos_breakdown: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _pct(num: int, den: int) -> float:
    return round(100.0 * num / den, 1) if den else 0.0


def dataset_stats(dataset: Dataset, spans: dict[str, Sequence["CandidateSpan"]]) -> StatsReport:
    report = StatsReport(dataset.name)
    if not len(dataset):
        logger.warning("dataset_stats on empty dataset %s", dataset.name)
        return report
    n = len(dataset)
    n_nf_summ = n_spans = n_nf_spans = n_tokens = n_nf_tokens = 0
    ignored: Counter = Counter()
    for pair in dataset:
        pair_spans = spans[pair.pair_id]
        n_nf_summ += 1 - derive_summary_gold(pair)
        n_spans += len(pair_spans)
        n_nf_spans += sum(1 - derive_span_gold(s, pair) for s in pair_spans)
        n_tokens += len(pair.tokens)
        for tok in pair.tokens:
            if tok.gold_label:
                continue
            n_nf_tokens += 1
            if not any(tok.start < s.end and s.start < tok.end for s in pair_spans):
                ignored[tok.pos] += 1
    n_ignored = sum(ignored.values())
    report.total_summaries = n
    report.pct_nonfactual_summaries = _pct(n_nf_summ, n)
    report.spans_per_summary = round(n_spans / n, 1)
    report.pct_nonfactual_spans = _pct(n_nf_spans, n_spans)
    report.tokens_per_summary = round(n_tokens / n, 1)
    report.pct_nonfactual_tokens = _pct(n_nf_tokens, n_tokens)
    report.pct_ignored_nonfactual_tokens = _pct(n_ignored, n_nf_tokens)
    report.ignored_pos_breakdown = {
        pos: _pct(c, n_ignored) for pos, c in sorted(ignored.items(), key=lambda kv: (-kv[1], kv[0]))
    }
    return report
