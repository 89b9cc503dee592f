"""Concept registry and the lexical concept matcher.

The registry is a declarative JSON document::

    {
      "concepts": [
        {
          "concept_id": "pleural_effusion",
          "present_patterns": ["pleural effusion", "effusion"],
          "absent_patterns": ["costophrenic angles are sharp"],
          "negation_cues": ["no", "without"],
          "claim_templates": {"present": "{name} is present",
                              "absent": "{name} is absent"},
          "related_terms": ["pleural fluid"],          # optional, pool rules
          "evaluation_only": false                      # optional
        }
      ],
      "pool_rules": {"hedge_cues": ["may", "can"]}     # optional
    }

Patterns are matched as contiguous token sequences (case-insensitive, on the
shared tokenizer), which gives word-boundary semantics for free.
"""

from __future__ import annotations

import json
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .text import find_phrase, segment_sentences, tokenize

STATES = ("present", "absent")

DEFAULT_HEDGE_CUES = (
    "may", "might", "can", "could", "occasionally", "rarely", "sometimes",
    "differential", "mimic", "mimics", "unlike", "versus", "vs", "whereas",
)

STOPWORDS = frozenset(
    """a an the of in on at to for with without and or but is are was were be
    been being has have had no not as by from that this these those it its
    there their than then into onto""".split()
)


def opposite(state: str) -> str:
    if state == "present":
        return "absent"
    if state == "absent":
        return "present"
    raise ValueError(f"unknown state {state!r}")


@lru_cache(maxsize=1024)
def _vocabulary(patterns: tuple[str, ...]) -> frozenset[str]:
    words: set[str] = set()
    for pattern in patterns:
        words.update(t for t in tokenize(pattern) if t.isalnum() and t not in STOPWORDS)
    return frozenset(words)


@dataclass(frozen=True)
class Concept:
    concept_id: str
    present_patterns: tuple[str, ...]
    absent_patterns: tuple[str, ...]
    negation_cues: tuple[str, ...]
    claim_templates: dict = field(hash=False)
    related_terms: tuple[str, ...] = ()
    evaluation_only: bool = False

    @property
    def name(self) -> str:
        return self.concept_id.replace("_", " ")

    def render_claim(self, state: str) -> str:
        if state not in STATES:
            raise ValueError(f"unknown state {state!r}")
        return self.claim_templates[state].format(name=self.name, concept_id=self.concept_id)

    def vocabulary(self) -> frozenset[str]:
        """Content tokens of the present and absent patterns."""
        return _vocabulary(self.present_patterns + self.absent_patterns)

    def to_dict(self) -> dict:
        return {
            "concept_id": self.concept_id,
            "present_patterns": list(self.present_patterns),
            "absent_patterns": list(self.absent_patterns),
            "negation_cues": list(self.negation_cues),
            "claim_templates": dict(self.claim_templates),
            "related_terms": list(self.related_terms),
            "evaluation_only": self.evaluation_only,
        }


@dataclass(frozen=True)
class ConceptRegistry:
    concepts: tuple[Concept, ...]
    hedge_cues: tuple[str, ...] = DEFAULT_HEDGE_CUES
    _by_id: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for concept in self.concepts:
            if concept.concept_id in by_id:
                raise ValueError(f"duplicate concept_id {concept.concept_id!r}")
            for state in STATES:
                if not str(concept.claim_templates.get(state, "")).strip():
                    raise ValueError(f"{concept.concept_id}: empty {state} claim template")
            if not concept.evaluation_only and not (
                concept.present_patterns and concept.absent_patterns
            ):
                raise ValueError(
                    f"{concept.concept_id}: pattern lists may be empty only for "
                    "evaluation_only concepts"
                )
            by_id[concept.concept_id] = concept
        object.__setattr__(self, "_by_id", by_id)

    def __getitem__(self, concept_id: str) -> Concept:
        try:
            return self._by_id[concept_id]
        except KeyError:
            raise KeyError(f"unknown concept {concept_id!r}") from None

    def __contains__(self, concept_id: object) -> bool:
        return concept_id in self._by_id

    def __iter__(self):
        return iter(self.concepts)

    def __len__(self) -> int:
        return len(self.concepts)

    @property
    def concept_ids(self) -> list[str]:
        return [c.concept_id for c in self.concepts]

    @classmethod
    def from_dict(cls, data: dict) -> "ConceptRegistry":
        concepts = []
        for raw in data["concepts"]:
            templates = raw.get("claim_templates") or {
                "present": "{name} is present",
                "absent": "{name} is absent",
            }
            concepts.append(
                Concept(
                    concept_id=raw["concept_id"],
                    present_patterns=tuple(raw.get("present_patterns", ())),
                    absent_patterns=tuple(raw.get("absent_patterns", ())),
                    negation_cues=tuple(raw.get("negation_cues", ())),
                    claim_templates=dict(templates),
                    related_terms=tuple(raw.get("related_terms", ())),
                    evaluation_only=bool(raw.get("evaluation_only", False)),
                )
            )
        hedge = data.get("pool_rules", {}).get("hedge_cues", DEFAULT_HEDGE_CUES)
        return cls(tuple(concepts), tuple(hedge))

    @classmethod
    def load(cls, path: str | Path) -> "ConceptRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "concepts": [c.to_dict() for c in self.concepts],
            "pool_rules": {"hedge_cues": list(self.hedge_cues)},
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, ensure_ascii=False)
            fh.write("\n")


@dataclass(frozen=True)
class SentenceMatch:
    """Pattern hits of one concept inside one sentence."""

    present: int = 0  # un-negated present-pattern hits
    negated: int = 0  # present-pattern hits preceded by a negation cue
    absent: int = 0  # absent-pattern hits
    related: int = 0  # related-term hits
    hedged: bool = False

    @property
    def any_vocabulary(self) -> bool:
        return bool(self.present or self.negated or self.absent or self.related)

    @property
    def absence_framed(self) -> bool:
        return bool(self.absent or self.negated)


@lru_cache(maxsize=4096)
def _pattern_tokens(pattern: str) -> tuple[str, ...]:
    return tuple(tokenize(pattern))


def _hits(tokens: Sequence[str], patterns: Iterable[str]) -> list[tuple[int, int]]:
    spans = []
    for pattern in patterns:
        ptoks = _pattern_tokens(pattern)
        spans.extend((i, i + len(ptoks)) for i in find_phrase(tokens, ptoks))
    return spans


def _overlaps(span: tuple[int, int], others: Iterable[tuple[int, int]]) -> bool:
    return any(span[0] < o[1] and o[0] < span[1] for o in others)


def match_sentence(
    tokens: Sequence[str], concept: Concept, hedge_cues: Sequence[str] = ()
) -> SentenceMatch:
    """Match one concept against one tokenized sentence.

    A present-pattern hit is negated when a negation cue ends before it starts
    in the same sentence. Present hits that sit inside an absent-pattern hit
    are not counted as present.
    """
    absent_spans = _hits(tokens, concept.absent_patterns)
    cue_spans = _hits(tokens, concept.negation_cues)
    present = negated = 0
    seen: list[tuple[int, int]] = []
    # longest hit first at each start so nested patterns count once
    for span in sorted(_hits(tokens, concept.present_patterns), key=lambda s: (s[0], -s[1])):
        if _overlaps(span, seen) or _overlaps(span, absent_spans):
            continue
        seen.append(span)
        if any(cue[1] <= span[0] for cue in cue_spans):
            negated += 1
        else:
            present += 1
    related = len(_hits(tokens, concept.related_terms))
    hedged = bool(_hits(tokens, hedge_cues))
    return SentenceMatch(present, negated, len(absent_spans), related, hedged)


def sentence_framing(tokens: Sequence[str], concept: Concept) -> str | None:
    """'present', 'absent', or None when the sentence has no or mixed framing."""
    m = match_sentence(tokens, concept)
    if m.present and not m.absence_framed:
        return "present"
    if m.absence_framed and not m.present:
        return "absent"
    return None


@lru_cache(maxsize=65536)
def text_framing(text: str, concept: Concept) -> str | None:
    """Framing aggregated over the sentences of ``text``; mixed gives None."""
    framings = {sentence_framing(tokenize(s), concept) for s in segment_sentences(text)}
    framings.discard(None)
    return framings.pop() if len(framings) == 1 else None
