"""Shared text primitives: the stand-in tokenizer, whitespace normalization
and the rule-based sentence segmenter.

Every module that counts tokens or splits sentences goes through here so that
token positions, lengths and sentence boundaries mean the same thing
everywhere.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

# Sentence-final punctuation, optional closing quotes/brackets, then whitespace
# and an uppercase letter or digit.
_BOUNDARY_RE = re.compile(r"[.!?][\"')\]]*(?=\s+[A-Z0-9])")
_PARAGRAPH_RE = re.compile(r"\n[ \t]*\n")

ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "vs.", "cf.", "dr.", "mr.", "mrs.", "ms.", "prof.",
        "fig.", "figs.", "approx.", "ca.", "al.", "st.", "inc.", "jr.", "sr.",
        "ref.", "resp.", "max.", "min.",
    }
)


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens with punctuation detached.

    >>> tokenize("No gross effusion.")
    ['no', 'gross', 'effusion', '.']
    """
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def token_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of the tokens returned by :func:`tokenize`."""
    return [m.span() for m in _TOKEN_RE.finditer(text)]


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def split_paragraphs(text: str) -> list[str]:
    """Blank lines separate paragraphs; single line breaks are rejoined."""
    paragraphs = (normalize_whitespace(p) for p in _PARAGRAPH_RE.split(text))
    return [p for p in paragraphs if p]


def _is_abbreviation(paragraph: str, punct_pos: int) -> bool:
    word_start = paragraph.rfind(" ", 0, punct_pos) + 1
    word = paragraph[word_start : punct_pos + 1].lower().lstrip("(\"'[")
    return word in ABBREVIATIONS


def segment_sentences(text: str) -> list[str]:
    """Split text into sentences.

    Paragraphs are rebuilt first; sentences never cross a paragraph break.
    A boundary is sentence-final punctuation followed by whitespace and an
    uppercase letter or digit, unless the word carrying the period is a known
    abbreviation.
    """
    sentences: list[str] = []
    for paragraph in split_paragraphs(text):
        start = 0
        for match in _BOUNDARY_RE.finditer(paragraph):
            if paragraph[match.start()] == "." and _is_abbreviation(paragraph, match.start()):
                continue
            sentences.append(paragraph[start : match.end()].strip())
            start = match.end()
        tail = paragraph[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


def find_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> list[int]:
    """Start offsets of every contiguous occurrence of ``phrase`` in ``tokens``."""
    n, m = len(tokens), len(phrase)
    if m == 0 or m > n:
        return []
    tokens, phrase = list(tokens), list(phrase)
    first = phrase[0]
    return [
        i for i in range(n - m + 1)
        if tokens[i] == first and tokens[i : i + m] == phrase
    ]


def truncate_text(text: str, budget: int) -> tuple[str, int, bool]:
    """Cut ``text`` after its ``budget``-th token.

    Returns the (possibly shortened) text, its token count and whether a cut
    happened. Cutting at a token's end offset keeps re-tokenization stable.
    """
    spans = token_spans(text)
    if len(spans) <= budget:
        return text, len(spans), False
    return text[: spans[budget - 1][1]], budget, True


def length_summary(values: Iterable[float]) -> dict:
    """Mean, sd, median, 95th percentile and maximum of a length sample."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return {"n": 0, "mean": None, "sd": None, "median": None, "p95": None, "max": None}
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "median": float(np.median(arr)),
        "p95": float(np.percentile(arr, 95)),
        "max": float(arr.max()),
    }
