"""Question generation / answering providers: remote service, replay cache, rule-based stub.

All three expose the same two calls, :meth:`generate` and :meth:`answer`.
The stub is a deterministic, rule-based stand-in used by the test-suite and
demos; it keeps the property that matters for localization experiments:
questions copy the surrounding summary words (errors included), and a
question mentioning something absent from the source cannot be answered.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from pathlib import Path

from .annotate import CandidateSpan
from .text import STOPWORDS, WH_WORDS, normalize_token, stem

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"
PROVENANCES = ("model", "human_short", "human_intermediate", "human_long", "stub")


class BackendError(RuntimeError):
    def __init__(self, message: str, retryable: bool = False, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class ReplayMiss(BackendError):
    pass


@dataclass(frozen=True)
class Question:
    question_id: str
    text: str
    target_span_id: str
    provenance: str = "model"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("question text must be non-empty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class Answer:
    text: str
    start: int | None
    end: int | None
    answerable_prob: float
    unanswerable: bool

    def __post_init__(self):
        if not 0.0 <= self.answerable_prob <= 1.0:
            raise ValueError(f"answerable_prob {self.answerable_prob} outside [0, 1]")
        if self.unanswerable and (self.text or self.start is not None or self.end is not None):
            raise ValueError("unanswerable answers carry no text or offsets")

    def as_dict(self) -> dict:
        return asdict(self)


def make_answer(text: str, start, end, prob: float, threshold: float) -> Answer:
    if prob < threshold:
        return Answer("", None, None, prob, True)
    return Answer(text, start, end, prob, False)


@dataclass
class BackendConfig:
    provider: str = "stub"
    endpoint: str | None = None
    cache_path: str | None = None
    questions_per_span: int = 1
    answerability_threshold: float = 0.5
    max_concurrency: int = 4
    timeout: float = 30.0
    retries: int = 3
    context_window: int | None = None  # stub only: tokens kept on each side of the span

    def __post_init__(self):
        if self.provider not in ("service", "replay", "stub"):
            raise ValueError(f"unknown provider {self.provider!r}")
        if (self.provider == "service") != (self.endpoint is not None):
            raise ValueError("endpoint is required iff provider == 'service'")
        if (self.provider == "replay") != (self.cache_path is not None):
            raise ValueError("cache_path is required iff provider == 'replay'")
        if self.questions_per_span < 1 or self.max_concurrency < 1:
            raise ValueError("questions_per_span and max_concurrency must be positive")
        if not 0.0 <= self.answerability_threshold <= 1.0:
            raise ValueError("answerability_threshold must lie in [0, 1]")


def request_digest(op: str, payload: dict) -> str:
    blob = json.dumps({"op": op, **payload}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _generate_payload(span: CandidateSpan, context: str) -> dict:
    return {"span_text": span.text, "span_start": span.start, "span_end": span.end, "context": context,
            "span_kind": span.kind, "span_label": span.label}


def _answer_payload(question: str, context: str) -> dict:
    return {"question": question, "context": context}


class Backend:
    """Common surface; subclasses implement ``_generate_raw`` and ``_answer_raw``.

    Raw responses use the wire format, so recording and replay are
    provider-agnostic.
    """

    model_id = "unknown"
    provenance = "model"

    def __init__(self, config: BackendConfig):
        self.config = config

    def _generate_raw(self, payload: dict) -> dict:
        raise NotImplementedError

    def _answer_raw(self, payload: dict) -> dict:
        raise NotImplementedError

    def generate(self, span: CandidateSpan, context: str) -> list[Question]:
        if not (0 <= span.start < span.end <= len(context)) or context[span.start:span.end] != span.text:
            raise ValueError(f"span {span.span_id!r} does not lie in the given context")
        raw = self._generate_raw(_generate_payload(span, context))
        texts = [q["text"] for q in raw.get("questions", []) if q.get("text", "").strip()]
        if not texts:
            raise BackendError(f"{self.model_id}: no questions generated for span {span.span_id!r}")
        return [Question(f"{span.span_id}#q{i}", t, span.span_id, self.provenance)
                for i, t in enumerate(texts[: max(1, self.config.questions_per_span)])]

    def answer(self, question: str, context: str) -> Answer:
        if not context:
            raise ValueError("context must be non-empty")
        raw = self._answer_raw(_answer_payload(question, context))
        prob = float(raw.get("answerable_prob", 1.0))
        return make_answer(raw.get("answer") or "", raw.get("start"), raw.get("end"), prob,
                           self.config.answerability_threshold)


def generate_questions(backend: Backend, span: CandidateSpan, summary_context: str) -> list[Question]:
    return backend.generate(span, summary_context)


def answer_question(backend: Backend, question: Question | str, context: str) -> Answer:
    text = question.text if isinstance(question, Question) else question
    return backend.answer(text, context)


# ---------------------------------------------------------------------------
# remote service

class ServiceBackend(Backend):
    """JSON-over-HTTP client for ``/v1/generate`` and ``/v1/answer``."""

    def __init__(self, config: BackendConfig, qa_endpoint: str | None = None, model_id: str | None = None):
        super().__init__(config)
        self.qg_endpoint = (config.endpoint or os.environ.get("FCL_QG_ENDPOINT", "")).rstrip("/")
        self.qa_endpoint = (qa_endpoint or os.environ.get("FCL_QA_ENDPOINT") or self.qg_endpoint).rstrip("/")
        self.model_id = model_id or f"service:{self.qg_endpoint}"
        self._slots = threading.BoundedSemaphore(config.max_concurrency)

    def _post(self, url: str, payload: dict) -> dict:
        body = json.dumps(payload).encode("utf-8")
        last = None
        for attempt in range(1, self.config.retries + 1):
            req = urllib.request.Request(url, data=body, method="POST", headers={
                "Content-Type": "application/json", "X-Protocol-Version": PROTOCOL_VERSION})
            try:
                with self._slots, urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                if exc.code < 500:
                    raise BackendError(f"POST {url}: HTTP {exc.code}", retryable=False, attempts=attempt) from exc
                last = exc
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                last = exc
            if attempt < self.config.retries:
                time.sleep(min(0.05 * 2 ** attempt, 2.0))
        raise BackendError(f"POST {url} failed after {self.config.retries} attempts: {last}",
                           retryable=True, attempts=self.config.retries)

    def _generate_raw(self, payload):
        return self._post(f"{self.qg_endpoint}/v1/generate", payload)

    def _answer_raw(self, payload):
        return self._post(f"{self.qa_endpoint}/v1/answer", payload)


# ---------------------------------------------------------------------------
# record / replay

class ReplayBackend(Backend):
    def __init__(self, config: BackendConfig, records: dict[str, dict], model_id: str = "replay"):
        super().__init__(config)
        self.records = records
        self.model_id = model_id
        ids = {r.get("model_id", "") for r in records.values()}
        self.provenance = "stub" if ids == {"stub"} else "model"

    def _lookup(self, op: str, payload: dict) -> dict:
        key = request_digest(op, payload)
        try:
            return self.records[key]["response"]
        except KeyError:
            what = payload.get("span_text") or payload.get("question")
            raise ReplayMiss(f"replay miss for {op} {what!r} (key {key[:12]})") from None

    def _generate_raw(self, payload):
        return self._lookup("generate", payload)

    def _answer_raw(self, payload):
        return self._lookup("answer", payload)


def load_replay_cache(path, config: BackendConfig | None = None) -> ReplayBackend:
    path = Path(path)
    config = config or BackendConfig(provider="replay", cache_path=str(path))
    records: dict[str, dict] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key, op, response = rec["key"], rec["op"], rec["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise BackendError(f"{path}: line {lineno}: malformed cache record ({exc})") from None
            if op not in ("generate", "answer") or not isinstance(response, dict):
                raise BackendError(f"{path}: line {lineno}: bad op or response")
            if key in records and records[key]["response"] != response:
                raise BackendError(f"{path}: line {lineno}: conflicting duplicate key {key[:12]}")
            records[key] = rec
    model_ids = sorted({r.get("model_id", "") for r in records.values()})
    return ReplayBackend(config, records, model_id="replay:" + ",".join(model_ids))


class RecordingBackend(Backend):
    """Wraps a backend and keeps every raw request/response for later replay."""

    def __init__(self, inner: Backend):
        super().__init__(inner.config)
        self.inner = inner
        self.model_id = inner.model_id
        self.provenance = inner.provenance
        self.records: dict[str, dict] = {}
        self._lock = threading.Lock()

    def _keep(self, op, payload, response):
        key = request_digest(op, payload)
        with self._lock:
            self.records[key] = {"key": key, "op": op, "request": payload,
                                 "response": response, "model_id": self.inner.model_id}
        return response

    def _generate_raw(self, payload):
        return self._keep("generate", payload, self.inner._generate_raw(payload))

    def _answer_raw(self, payload):
        return self._keep("answer", payload, self.inner._answer_raw(payload))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for key in sorted(self.records):
                fh.write(json.dumps(self.records[key], sort_keys=True, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# rule-based stub

_TOKEN = re.compile(r"[£$]?\d+(?:[.,]\d+)*[a-zA-Z%]*|\w+(?:['’]\w+)*|[^\w\s]")
_AUX = {"is", "are", "was", "were", "has", "have", "had", "will", "would", "can", "could",
        "may", "might", "should", "must", "does", "do", "did"}
_IRREGULAR = {
    "said": "say", "won": "win", "hit": "hit", "took": "take", "made": "make", "gave": "give",
    "went": "go", "saw": "see", "found": "find", "told": "tell", "became": "become",
    "left": "leave", "met": "meet", "built": "build", "bought": "buy", "sold": "sell",
    "ran": "run", "wrote": "write", "led": "lead", "held": "hold", "began": "begin",
    "brought": "bring", "beat": "beat", "lost": "lose", "paid": "pay", "spent": "spend",
    "fell": "fall", "got": "get", "came": "come", "knew": "know", "thought": "think",
    "caught": "catch", "drew": "draw", "flew": "fly", "grew": "grow", "stole": "steal",
}
_DETERMINERS = {"the", "a", "an", "his", "her", "their", "its", "our", "my", "this", "these", "those"}
_MONTHS = {"january", "february", "march", "april", "may", "june", "july", "august", "september",
           "october", "november", "december", "monday", "tuesday", "wednesday", "thursday",
           "friday", "saturday", "sunday"}
_WH_BY_LABEL = {
    "PERSON": "Who", "ORG": "What", "GPE": "Where", "LOC": "Where", "FAC": "Where",
    "DATE": "When", "TIME": "When",
    "CARDINAL": "How many", "QUANTITY": "How many", "MONEY": "How much", "PERCENT": "How much",
}
_DROP_BEFORE = {"in", "on", "at", "during", "since"}


def wh_word(span: CandidateSpan) -> str:
    if span.kind == "NE":
        return _WH_BY_LABEL.get(span.label, "What")
    return "What"


def _tokenize(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(text)]


def _sentences(toks):
    out, cur = [], []
    for t in toks:
        cur.append(t)
        if t[0] in (".", "!", "?"):
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out


def _is_verbish(w: str) -> bool:
    lw = w.lower()
    return (lw in _AUX or lw in _IRREGULAR or (lw.endswith("ed") and len(lw) > 3)
            or (lw.endswith("ing") and len(lw) > 4) or lw.endswith("ly"))


def _is_finite_verb(w: str) -> bool:
    lw = w.lower()
    return lw in _AUX or lw in _IRREGULAR or (lw.endswith("ed") and len(lw) > 3)


def _past_verb(w: str) -> bool:
    lw = w.lower()
    return lw in _IRREGULAR or (lw.endswith("ed") and len(lw) > 3 and lw not in STOPWORDS)


def lemma(w: str) -> str:
    lw = w.lower()
    if lw in _IRREGULAR:
        return _IRREGULAR[lw]
    if lw.endswith("ied"):
        return lw[:-3] + "y"
    if lw.endswith("ed"):
        base = lw[:-2]
        if len(base) >= 2 and base[-1] == base[-2]:
            return base[:-1] if base[-1] in "bdgmnprt" else base
        if base and base[-1] in "svzckgu":
            return lw[:-1]
        return base
    return lw


def _is_capitalized(w: str) -> bool:
    return w[:1].isupper()


def _has_digit(w: str) -> bool:
    return any(c.isdigit() for c in w)


class StubBackend(Backend):
    """Deterministic rule-based QG + QA."""

    model_id = "stub"
    provenance = "stub"

    # -- question generation -------------------------------------------------

    def question_for(self, span_start: int, span_end: int, span_wh: str, context: str,
                     window: int | None) -> str:
        toks = _tokenize(context)
        sent = next((s for s in _sentences(toks) if s[0][1] <= span_start < s[-1][2]), toks)
        pre = [(i, t) for i, t in enumerate(sent) if t[2] <= span_start]
        post = [(i, t) for i, t in enumerate(sent) if t[1] >= span_end]
        first_span = next((i for i, t in enumerate(sent) if span_start <= t[1] < span_end), len(pre))
        last_span = max((i for i, t in enumerate(sent) if t[1] < span_end and t[2] > span_start),
                        default=first_span)
        while post and post[-1][1][0] in (".", "!", "?"):
            post.pop()
        if pre and pre[-1][1][0].lower() in _DROP_BEFORE and span_wh in ("When", "Where"):
            pre = pre[:-1]
        if pre and pre[0][1][0].lower() in STOPWORDS and pre[0][1][0] != "I":
            i, t = pre[0]
            pre[0] = (i, (t[0].lower(), t[1], t[2]))

        # items are (sentence index or None for inserted words, text)
        WH = [(None, span_wh)]
        words_pre = [(i, t[0]) for i, t in pre]
        words_post = [(i, t[0]) for i, t in post]
        if not words_pre:
            items = WH + words_post
        else:
            aux = next((k for k, (_, w) in enumerate(words_pre) if w.lower() in _AUX), None)
            verb = next((k for k, (_, w) in enumerate(words_pre) if k > 0 and _past_verb(w)), None)
            if aux is not None and (verb is None or aux < verb):
                items = WH + [words_pre[aux]] + words_pre[:aux] + words_pre[aux + 1:] + words_post
            elif verb is not None:
                i, w = words_pre[verb]
                items = WH + [(None, "did")] + words_pre[:verb] + [(i, lemma(w))] + words_pre[verb + 1:] + words_post
            else:
                items = words_pre + WH + words_post
        if window is not None:
            items = [(i, w) for i, w in items
                     if i is None or first_span - window <= i <= last_span + window]
        text = " ".join(w for _, w in items)
        text = re.sub(r"\s+([,;:%)'’])", r"\1", text)
        text = re.sub(r"\(\s+", "(", text).strip(" ,;:")
        return text[:1].upper() + text[1:] + "?"

    def windows(self) -> list[int | None]:
        w = self.config.context_window
        if w is None:
            return [None, 4, 2]
        return [w, max(w // 2, 1), max(w // 4, 0)]

    def _generate_raw(self, payload):
        start, end = payload["span_start"], payload["span_end"]
        span = CandidateSpan("", start, end, payload["span_text"], payload.get("span_kind", "NP"),
                             payload.get("span_label", ""))
        wh = wh_word(span)
        out = []
        for w in self.windows():
            q = self.question_for(start, end, wh, payload["context"], w)
            if q not in out:
                out.append(q)
        return {"questions": [{"text": q} for q in out[: self.config.questions_per_span]]}

    # -- question answering --------------------------------------------------

    @staticmethod
    def chunks(context: str) -> list[tuple[int, int, str, int]]:
        """Heuristic NP/NE chunks: (start, end, shape, sentence index).

        shape is "num" (contains a digit), "cap" (capitalized run) or "np".
        """
        found: dict[tuple[int, int], tuple[str, int]] = {}
        for si, sent in enumerate(_sentences(_tokenize(context))):
            words = [t[0] for t in sent]
            n = len(sent)

            def add(a, b, shape):
                found.setdefault((sent[a][1], sent[b - 1][2]), (shape, si))

            i = 0
            while i < n:
                w = words[i]
                lw = w.lower()
                if _has_digit(w):
                    j = i + 1
                    if j < n and words[j].isalpha() and words[j].islower() and lw not in STOPWORDS \
                            and words[j] not in STOPWORDS and not _is_verbish(words[j]):
                        j += 1
                    add(i, j, "num")
                elif i == 0 and n > 1 and w.isalpha() and lw not in STOPWORDS and words[1].isalpha() \
                        and words[1].islower() and words[1] not in STOPWORDS and not _is_verbish(words[1]):
                    # sentence-initial common noun phrase ("Heavy rain caused ...")
                    j = 1
                    while j < n and words[j].isalpha() and words[j].islower() \
                            and words[j] not in STOPWORDS and not _is_verbish(words[j]):
                        j += 1
                    add(0, j, "np")
                    i = j
                    continue
                elif _is_capitalized(w) and w.isalpha() and not (lw in STOPWORDS and (i == 0 or lw == "i")):
                    j = i
                    while j < n and words[j][:1].isupper() and words[j].isalpha():
                        j += 1
                    add(i, j, "cap")
                    i = j
                    continue
                elif lw in _DETERMINERS:
                    j = i + 1
                    while j < n and j - i <= 4 and (words[j].isalnum() or _has_digit(words[j])) \
                            and words[j].lower() not in STOPWORDS and not _is_finite_verb(words[j]):
                        j += 1
                    if j > i + 1:
                        add(i, j, "np")
                        i = j
                        continue
                elif i > 0 and _is_capitalized(words[i - 1]) and lw.endswith("s") and not lw.endswith("ss") \
                        and i + 1 < n and words[i + 1].isalpha() and words[i + 1].islower():
                    # present-tense verb after a name ("Hill collects labels"), not part of a chunk
                    pass
                elif w.isalpha() and w.islower() and lw not in STOPWORDS and not _is_verbish(w):
                    j = i
                    while j < n and words[j].isalpha() and words[j].islower() \
                            and words[j] not in STOPWORDS and not _is_verbish(words[j]):
                        j += 1
                    add(i, j, "np")
                    i = j
                    continue
                i += 1
        return sorted((a, b, shape, si) for (a, b), (shape, si) in found.items())

    @staticmethod
    def _compatible(wh: str, shape: str, text: str) -> bool:
        if wh in ("who", "where"):
            return shape == "cap"
        if wh == "when":
            return shape == "num" or any(w.lower() in _MONTHS for w in text.split())
        if wh == "how":
            return shape == "num"
        return shape != "num" or not text.isdigit()

    def _answer_raw(self, payload):
        question, context = payload["question"], payload["context"]
        q_words = [normalize_token(t[0]) for t in _tokenize(question)]
        q_words = [w for w in q_words if w]
        wh = next((w for w in q_words if w in WH_WORDS), "what")
        q_content = {stem(w) for w in q_words if w not in STOPWORDS and w not in WH_WORDS}
        toks = _tokenize(context)
        ctx_stems = {stem(normalize_token(t[0])) for t in toks}
        if not q_content <= ctx_stems:
            # presupposition failure: the question mentions something the context lacks
            return {"answer": "", "start": None, "end": None, "answerable_prob": 0.0}
        sents = _sentences(toks)
        best, best_score = None, -1.0
        for a, b, shape, si in self.chunks(context):
            text = context[a:b]
            if not self._compatible(wh, shape, text):
                continue
            c_stems = {stem(normalize_token(w)) for w in text.split()} - {stem(w) for w in STOPWORDS}
            if c_stems and c_stems <= q_content:
                continue
            # evidence to the left of a candidate counts a little more: fronted
            # questions ("What did X collect?") ask for the object after the verb
            score = 0.05 if wh == "what" and shape == "np" else 0.0
            for t in sents[si]:
                if t[2] <= a or t[1] >= b:
                    s = stem(normalize_token(t[0]))
                    if s in q_content:
                        weight = 1.0 if t[2] <= a else 0.9
                        score += weight / (1 + _distance(sents[si], t, a, b))
            if score > best_score + 1e-12:
                best, best_score = (a, b), score
        if best is None:
            return {"answer": "", "start": None, "end": None, "answerable_prob": 0.0}
        a, b = best
        return {"answer": context[a:b], "start": a, "end": b, "answerable_prob": 1.0}


def _distance(sent, tok, a, b) -> int:
    """Token distance from ``tok`` to the nearest token of the chunk [a, b)."""
    idx = [i for i, t in enumerate(sent) if t[1] >= a and t[2] <= b]
    i = sent.index(tok)
    return min(abs(i - j) for j in idx) if idx else len(sent)


def make_backend(config: BackendConfig, **kwargs) -> Backend:
    if config.provider == "stub":
        return StubBackend(config)
    if config.provider == "replay":
        return load_replay_cache(config.cache_path, config)
    return ServiceBackend(config, **kwargs)
