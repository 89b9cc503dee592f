"""Frozen evidence universe: article segmentation, sentence filtering,
concept-specific pool assignment and the article-level trainval/held-out split.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .registry import DEFAULT_HEDGE_CUES, Concept, ConceptRegistry, match_sentence
from .seeding import unit_interval
from .text import normalize_whitespace, segment_sentences, tokenize

log = logging.getLogger(__name__)

ROLES = ("support_present", "support_absent", "nonsupport_hard", "nonsupport_easy")
SUPPORT_ROLE = {"present": "support_present", "absent": "support_absent"}
NONSUPPORT_ROLES = ("nonsupport_hard", "nonsupport_easy")

MIN_TOKENS = 5
MAX_TOKENS = 50

_LIST_MARKER_RE = re.compile(r"^\s*(?:[-*•·–>]|\(?\d{1,3}[.)]\s|\(?[a-z][.)]\s)")
_DEFINITION_RE = re.compile(r"^(?:\S+\s+){0,8}?(?:is|are)\s+defined\s+as\b", re.IGNORECASE)
_WORD_RE = re.compile(r"[^\W\d_]+")
METADATA_PREFIXES = (
    "see also", "references", "related articles", "citation", "doi", "pmid",
    "promoted articles", "cases and figures", "updates to article",
)


@dataclass(frozen=True)
class EvidenceUnit:
    evidence_id: str
    article_id: str
    sentence_index: int
    text: str
    token_len: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvidenceUnit":
        return cls(d["evidence_id"], d["article_id"], int(d["sentence_index"]), d["text"],
                   int(d["token_len"]))


@dataclass(frozen=True)
class PoolAssignment:
    concept_id: str
    evidence_id: str
    role: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PoolAssignment":
        return cls(d["concept_id"], d["evidence_id"], d["role"])


@dataclass(frozen=True)
class EvidenceSplit:
    trainval_article_ids: frozenset[str] = frozenset()
    heldout_article_ids: frozenset[str] = frozenset()

    def subset_of(self, article_id: str) -> str:
        if article_id in self.trainval_article_ids:
            return "trainval"
        if article_id in self.heldout_article_ids:
            return "heldout"
        raise KeyError(f"article {article_id!r} is in neither subset")


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: str | None = None


def evidence_id_for(article_id: str, sentence_index: int) -> str:
    return f"{article_id}#{sentence_index}"


def segment_article(article_id: str, article_text: str) -> list[str]:
    """Candidate sentences of one article, in reading order."""
    return segment_sentences(article_text or "")


def _is_metadata_like(sentence: str) -> bool:
    stripped = sentence.strip()
    if _LIST_MARKER_RE.match(stripped) or stripped.endswith(":"):
        return True
    if stripped.lower().startswith(METADATA_PREFIXES):
        return True
    words = _WORD_RE.findall(stripped)
    return bool(words) and all(w[0].isupper() for w in words)


def filter_sentence(sentence: str) -> FilterDecision:
    """Keep or drop a candidate evidence sentence.

    Drop reasons, checked in order: metadata_like, definition_like, fragment
    (< 5 tokens), over_budget (> 50 tokens).
    """
    if _is_metadata_like(sentence):
        return FilterDecision(False, "metadata_like")
    if _DEFINITION_RE.match(sentence.strip()):
        return FilterDecision(False, "definition_like")
    n = len(tokenize(sentence))
    if n < MIN_TOKENS:
        return FilterDecision(False, "fragment")
    if n > MAX_TOKENS:
        return FilterDecision(False, "over_budget")
    return FilterDecision(True)


def assign_pool(
    evidence: EvidenceUnit,
    concept: Concept,
    *,
    hedge_cues: Sequence[str] = DEFAULT_HEDGE_CUES,
    enrolled_easy: bool = False,
) -> PoolAssignment | None:
    """Pool role of one evidence sentence for one concept.

    Absence framing without any assertive present hit gives support_absent;
    an un-negated, unhedged present hit gives support_present. Any remaining
    pattern or related-term hit (mixed or hedged framing included) gives
    nonsupport_hard. Sentences with no concept vocabulary get nonsupport_easy
    only when the sampler enrolled them.
    """
    m = match_sentence(tokenize(evidence.text), concept, hedge_cues)
    if m.absence_framed and not m.present:
        role = "support_absent"
    elif m.present and not m.absence_framed and not m.hedged:
        role = "support_present"
    elif m.any_vocabulary:
        role = "nonsupport_hard"
    elif enrolled_easy:
        role = "nonsupport_easy"
    else:
        return None
    return PoolAssignment(concept.concept_id, evidence.evidence_id, role)


def enroll_easy(
    units: Iterable[EvidenceUnit], concept: Concept, n: int, seed: int
) -> set[str]:
    """Seeded sample of ``n`` vocabulary-free sentences for the easy pool.

    Ranking by a per-sentence hash keeps the sample independent of input order.
    """
    candidates = [
        u.evidence_id for u in units
        if not match_sentence(tokenize(u.text), concept).any_vocabulary
    ]
    candidates.sort(key=lambda eid: (unit_interval("easy-enrollment", seed, concept.concept_id, eid), eid))
    return set(candidates[: max(n, 0)])


def assign_pools(
    units: Sequence[EvidenceUnit], registry: ConceptRegistry, *, n_easy: int, seed: int
) -> list[PoolAssignment]:
    """Pool assignments for every concept, in (concept_id, article, sentence) order."""
    ordered = sorted(units, key=lambda u: (u.article_id, u.sentence_index))
    out = []
    for concept in sorted(registry, key=lambda c: c.concept_id):
        easy = enroll_easy(ordered, concept, n_easy, seed)
        for unit in ordered:
            a = assign_pool(unit, concept, hedge_cues=registry.hedge_cues,
                            enrolled_easy=unit.evidence_id in easy)
            if a is not None:
                out.append(a)
    return out


def concept_coverage(concept_id: str, assignments: Iterable[PoolAssignment]) -> int:
    """Size of the union of the four pools of a concept."""
    return len({a.evidence_id for a in assignments if a.concept_id == concept_id})


def article_coverage(
    units: Iterable[EvidenceUnit], assignments: Iterable[PoolAssignment]
) -> dict[str, Counter]:
    """Per-article count of topical (non-easy) assignments by concept."""
    article_of = {u.evidence_id: u.article_id for u in units}
    coverage: dict[str, Counter] = {aid: Counter() for aid in sorted(set(article_of.values()))}
    for a in assignments:
        if a.role != "nonsupport_easy":
            coverage[article_of[a.evidence_id]][a.concept_id] += 1
    return coverage


def dominant_concept(counts: Mapping[str, int]) -> str:
    """Most-covered concept; lexicographically first on ties; '' when uncovered."""
    best = ""
    for concept_id in sorted(counts):
        if counts[concept_id] > 0 and (not best or counts[concept_id] > counts[best]):
            best = concept_id
    return best


def split_articles(
    coverage: Mapping[str, Mapping[str, int]], seed: int, ratio: float = 0.80
) -> EvidenceSplit:
    """Article-level split, stratified by each article's dominant concept.

    Within a bucket articles are ordered by a seeded hash and the first
    round(ratio * bucket size) go to trainval.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {ratio}")
    buckets: dict[str, list[str]] = defaultdict(list)
    for article_id, counts in coverage.items():
        buckets[dominant_concept(counts)].append(article_id)
    trainval, heldout = set(), set()
    for key in sorted(buckets):
        members = sorted(buckets[key], key=lambda a: (unit_interval("article-split", seed, a), a))
        n_tv = math.floor(ratio * len(members) + 0.5)
        trainval.update(members[:n_tv])
        heldout.update(members[n_tv:])
    return EvidenceSplit(frozenset(trainval), frozenset(heldout))


def index_pools(
    assignments: Iterable[PoolAssignment], allowed: set[str] | frozenset[str] | None = None
) -> dict[tuple[str, str], list[str]]:
    """(concept_id, role) -> evidence ids in canonical order, optionally restricted."""
    pools: dict[tuple[str, str], list[str]] = defaultdict(list)
    for a in assignments:
        if allowed is None or a.evidence_id in allowed:
            pools[(a.concept_id, a.role)].append(a.evidence_id)
    return {k: sorted(v) for k, v in pools.items()}


@dataclass
class EvidenceBuild:
    units: list[EvidenceUnit]
    assignments: list[PoolAssignment]
    split: EvidenceSplit
    dropped: list[dict] = field(default_factory=list)
    duplicate_articles: list[str] = field(default_factory=list)

    def evidence_ids(self, subset: str) -> frozenset[str]:
        articles = (self.split.trainval_article_ids if subset == "trainval"
                    else self.split.heldout_article_ids)
        return frozenset(u.evidence_id for u in self.units if u.article_id in articles)

    def stats(self, registry: ConceptRegistry) -> dict:
        coverage = {c: concept_coverage(c, self.assignments) for c in registry.concept_ids}
        role_counts = Counter((a.concept_id, a.role) for a in self.assignments)
        return {
            "articles_represented": len({u.article_id for u in self.units}),
            "duplicate_articles_dropped": len(self.duplicate_articles),
            "sentences_retained": len(self.units),
            "sentences_dropped": dict(sorted(Counter(d["reason"] for d in self.dropped).items())),
            "concept_coverage": coverage,
            "pool_sizes": {
                c: {r: role_counts[(c, r)] for r in ROLES} for c in registry.concept_ids
            },
            "trainval_articles": len(self.split.trainval_article_ids),
            "heldout_articles": len(self.split.heldout_article_ids),
            "trainval_sentences": len(self.evidence_ids("trainval")),
            "heldout_sentences": len(self.evidence_ids("heldout")),
        }


def build_evidence(
    articles: Iterable[Mapping],
    registry: ConceptRegistry,
    *,
    seed: int,
    n_easy: int,
    ratio: float = 0.80,
) -> EvidenceBuild:
    """Articles ({article_id, title, body_text}) to units, pools and split."""
    by_id = {}
    for article in articles:
        by_id[str(article["article_id"])] = article.get("body_text") or ""
    units, dropped, duplicates = [], [], []
    seen_bodies: set[str] = set()
    for article_id in sorted(by_id):
        body = by_id[article_id]
        key = normalize_whitespace(body).lower()
        if key in seen_bodies:
            duplicates.append(article_id)
            continue
        seen_bodies.add(key)
        for index, sentence in enumerate(segment_article(article_id, body)):
            decision = filter_sentence(sentence)
            if decision.keep:
                units.append(EvidenceUnit(evidence_id_for(article_id, index), article_id, index,
                                          sentence, len(tokenize(sentence))))
            else:
                dropped.append({"article_id": article_id, "sentence_index": index,
                                "reason": decision.reason})
    assignments = assign_pools(units, registry, n_easy=n_easy, seed=seed)
    split = split_articles(article_coverage(units, assignments), seed, ratio)
    log.info("evidence universe: %d sentences from %d articles, %d pool assignments",
             len(units), len({u.article_id for u in units}), len(assignments))
    return EvidenceBuild(units, assignments, split, dropped, duplicates)
