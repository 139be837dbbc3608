"""Shared string normalization helpers."""
from __future__ import annotations

import re
import string

_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_PUNCT = set(string.punctuation) | {"‘", "’", "“", "”", "£"}
_WORD = re.compile(r"[\w£$%]+(?:[.,'][\w]+)*", re.UNICODE)

STOPWORDS = frozenset("""
a an the and or but if of at by for with about against between into through during before
after above below to from up down in out on off over under again further then once here
there all any both each few more most other some such no nor not only own same so than too
very can will just should now is are was were be been being have has had having do does did
doing would could may might must shall what which who whom whose when where why how this that
these those am it its i me my we our you your he him his she her they them their as
""".split())

WH_WORDS = frozenset({"what", "who", "whom", "where", "when", "why", "how", "which", "many", "much"})


def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation and articles, squeeze whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def normalize_token(s: str) -> str:
    return "".join(ch for ch in s.lower() if ch not in _PUNCT)


def words(s: str) -> list[str]:
    return [normalize_token(m.group()) for m in _WORD.finditer(s) if normalize_token(m.group())]


def word_spans(s: str) -> list[tuple[int, int]]:
    return [m.span() for m in _WORD.finditer(s)]


def stem(w: str) -> str:
    """Crude suffix stripper; good enough to match 'visited' with 'visit'."""
    w = w.lower()
    for suf in ("ing", "ed", "es", "s"):
        if len(w) - len(suf) >= 3 and w.endswith(suf):
            w = w[: -len(suf)]
            break
    if len(w) > 3 and w[-1] == w[-2] and w[-1] not in "aeiouls":
        w = w[:-1]
    if len(w) > 3 and w.endswith("e"):
        w = w[:-1]
    return w


def content_words(s: str) -> list[str]:
    return [w for w in words(s) if w not in STOPWORDS and w not in WH_WORDS]


def token_f1(pred: str, gold: str) -> float:
    p, g = normalize_answer(pred).split(), normalize_answer(gold).split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    common = {}
    for w in p:
        common[w] = min(p.count(w), g.count(w))
    same = sum(common.values())
    if same == 0:
        return 0.0
    prec, rec = same / len(p), same / len(g)
    return 2 * prec * rec / (prec + rec)
