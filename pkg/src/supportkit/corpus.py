"""Case ingestion: report section parsing, concept-state extraction, claim
construction, shortcut filtering and patient-wise splitting.

Role separation is enforced structurally: gold states are computed from the
impression text only and the case context (and every shortcut decision) from
the findings text only.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Mapping, Sequence

from .registry import STATES, ConceptRegistry, match_sentence
from .seeding import unit_interval
from .text import normalize_whitespace, segment_sentences, tokenize

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
DEFAULT_RATIOS = (0.75, 0.10, 0.15)

_HEADER_RE = re.compile(r"(?m)^[ \t]*([A-Za-z][A-Za-z /&()-]{1,40}?)[ \t]*:")
KNOWN_SECTIONS = frozenset(
    {
        "findings", "impression", "examination", "exam", "indication", "comparison",
        "technique", "history", "clinical history", "clinical information",
        "reason for exam", "procedure", "wet read", "conclusion", "notification",
        "recommendation", "recommendations", "addendum",
    }
)
ADMIN_LINES = frozenset({"final report", "wet read", "addendum", "preliminary report"})


@dataclass(frozen=True)
class CaseRecord:
    patient_id: str
    report_id: str
    findings_text: str
    impression_text: str
    split: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CaseRecord":
        return cls(d["patient_id"], d["report_id"], d["findings_text"],
                   d["impression_text"], d.get("split"))


@dataclass(frozen=True)
class ParsedReport:
    findings: str
    impression: str


@dataclass(frozen=True)
class Rejection:
    reason: str  # missing_findings | missing_impression | malformed
    detail: str = ""


@dataclass(frozen=True)
class Claim:
    concept_id: str
    state: str
    claim_text: str

    def to_dict(self) -> dict:
        return {"concept_id": self.concept_id, "state": self.state, "claim_text": self.claim_text}


@dataclass(frozen=True)
class ShortcutResult:
    is_direct_mention: bool
    anchor_sentence: str | None
    anchor_confidence: str
    anchor_terms: tuple[str, ...] = ()


@dataclass(frozen=True)
class CaseConceptInstance:
    report_id: str
    concept_id: str
    gold_state: str
    is_direct_mention: bool
    hardness_reason: str
    anchor_sentence: str | None
    anchor_confidence: str
    patient_id: str = ""
    split: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CaseConceptInstance":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__ if k in d})


def _is_header(name: str) -> bool:
    return name.isupper() or name.strip().lower() in KNOWN_SECTIONS


def _strip_admin_lines(text: str) -> str:
    kept = [ln for ln in text.splitlines() if ln.strip().lower() not in ADMIN_LINES]
    return "\n".join(kept)


def parse_report(raw_text: str) -> ParsedReport | Rejection:
    """Split a raw report into normalized findings and impression text.

    Only the FINDINGS and IMPRESSION blocks survive; every other headed block
    (EXAMINATION, INDICATION, COMPARISON, ...) and administrative banner lines
    are dropped. De-identification blanks are kept verbatim.
    """
    if not raw_text or not raw_text.strip():
        return Rejection("malformed", "empty report")
    headers = [m for m in _HEADER_RE.finditer(raw_text) if _is_header(m.group(1))]
    sections: dict[str, str] = {}
    for i, m in enumerate(headers):
        name = normalize_whitespace(m.group(1)).lower()
        end = headers[i + 1].start() if i + 1 < len(headers) else len(raw_text)
        body = normalize_whitespace(_strip_admin_lines(raw_text[m.end() : end]))
        if name in ("findings", "impression") and name in sections:
            return Rejection("malformed", f"duplicate {name.upper()} section")
        sections[name] = body
    if not sections.get("findings"):
        return Rejection("missing_findings")
    if not sections.get("impression"):
        return Rejection("missing_impression")
    return ParsedReport(sections["findings"], sections["impression"])


def extract_concept_states(impression: str, registry: ConceptRegistry) -> dict[str, str]:
    """Map every concept to present, absent or undetermined from impression text.

    Any un-negated present-pattern hit makes a concept present. Otherwise an
    absent-pattern hit or a negated present-pattern hit makes it absent.
    """
    sentences = [tokenize(s) for s in segment_sentences(impression)]
    states = {}
    for concept in registry:
        matches = [match_sentence(toks, concept) for toks in sentences]
        if any(m.present for m in matches):
            states[concept.concept_id] = "present"
        elif any(m.absence_framed for m in matches):
            states[concept.concept_id] = "absent"
        else:
            states[concept.concept_id] = "undetermined"
    return states


def build_claim_family(concept_id: str, registry: ConceptRegistry) -> tuple[Claim, Claim]:
    concept = registry[concept_id]
    return tuple(Claim(concept_id, s, concept.render_claim(s)) for s in STATES)  # type: ignore[return-value]


def _confidence(n_terms: int) -> str:
    if n_terms >= 3:
        return "high"
    if n_terms == 2:
        return "medium"
    return "low"


def shortcut_filter(findings: str, concept_id: str, registry: ConceptRegistry) -> ShortcutResult:
    """Decide whether a concept is directly stated in the findings text.

    The anchor is the findings sentence sharing the most distinct tokens with
    the concept's pattern vocabulary; the earliest sentence wins ties.
    """
    concept = registry[concept_id]
    vocab = concept.vocabulary()
    direct = False
    best: tuple[int, str | None, tuple[str, ...]] = (0, None, ())
    for sentence in segment_sentences(findings):
        tokens = tokenize(sentence)
        if match_sentence(tokens, concept).present:
            direct = True
        terms = tuple(sorted(vocab.intersection(tokens)))
        if len(terms) > best[0]:
            best = (len(terms), sentence, terms)
    return ShortcutResult(direct, best[1], _confidence(best[0]), best[2])


def build_case_instances(case: CaseRecord, registry: ConceptRegistry) -> list[CaseConceptInstance]:
    """All defined report-concept pairs of one case, in concept_id order."""
    states = extract_concept_states(case.impression_text, registry)
    out = []
    for concept_id in sorted(states):
        state = states[concept_id]
        if state == "undetermined":
            continue
        sc = shortcut_filter(case.findings_text, concept_id, registry)
        if sc.is_direct_mention:
            reason = "direct_mention_excluded"
        elif sc.anchor_sentence is not None:
            reason = "indirect_findings"
        else:
            reason = "other"
        out.append(
            CaseConceptInstance(
                report_id=case.report_id,
                concept_id=concept_id,
                gold_state=state,
                is_direct_mention=sc.is_direct_mention,
                hardness_reason=reason,
                anchor_sentence=sc.anchor_sentence,
                anchor_confidence=sc.anchor_confidence,
                patient_id=case.patient_id,
                split=case.split,
            )
        )
    return out


def split_of(patient_id: str, seed: int, ratios: Sequence[float] = DEFAULT_RATIOS) -> str:
    u = unit_interval("patient-split", seed, patient_id)
    cumulative = 0.0
    for name, ratio in zip(SPLITS, ratios):
        cumulative += ratio
        if u < cumulative:
            return name
    return SPLITS[-1]


def assign_patient_splits(
    cases: Iterable[CaseRecord], seed: int, ratios: Sequence[float] = DEFAULT_RATIOS
) -> dict[str, str]:
    """Patient-wise split map via a seeded hash of the patient id.

    Hashing (rather than shuffling) means adding cases never moves an already
    assigned patient.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three nonnegative values summing to 1, got {ratios}")
    patients = sorted({c.patient_id for c in cases})
    return {pid: split_of(pid, seed, ratios) for pid in patients}


def prevalence_shift(
    corpus_a: Sequence[CaseConceptInstance],
    corpus_b: Sequence[CaseConceptInstance],
    concept_id: str,
    state: str,
) -> float:
    """p_b(k, s) - p_a(k, s), with p the state frequency among pairs of concept k."""

    def freq(corpus):
        states = [i.gold_state for i in corpus if i.concept_id == concept_id]
        return (sum(s == state for s in states) / len(states)) if states else None

    fa, fb = freq(corpus_a), freq(corpus_b)
    if fa is None and fb is None:
        raise ValueError(f"concept {concept_id!r} absent from both corpora")
    return (fb or 0.0) - (fa or 0.0)


@dataclass
class IngestResult:
    cases: list[CaseRecord]
    rejections: list[dict]
    benchmark: list[CaseConceptInstance]
    easy_control: list[CaseConceptInstance]
    splits: dict[str, str]

    def counts(self) -> dict:
        return {
            "retained_reports": len(self.cases),
            "rejected_reports": len(self.rejections),
            "rejections_by_reason": dict(sorted(Counter(r["reason"] for r in self.rejections).items())),
            "pairs_before_filter": len(self.benchmark) + len(self.easy_control),
            "pairs_excluded_by_filter": len(self.easy_control),
            "pairs_in_benchmark": len(self.benchmark),
            "patients": len(self.splits),
        }


def record_to_case(record: Mapping) -> CaseRecord | Rejection:
    """Turn one input record (raw or pre-split) into a CaseRecord."""
    patient_id, report_id = record.get("patient_id"), record.get("report_id")
    if not patient_id or not report_id:
        return Rejection("malformed", "missing patient_id or report_id")
    if "raw_text" in record:
        parsed = parse_report(record.get("raw_text") or "")
        if isinstance(parsed, Rejection):
            return parsed
        findings, impression = parsed.findings, parsed.impression
    else:
        findings = normalize_whitespace(record.get("findings_text") or "")
        impression = normalize_whitespace(record.get("impression_text") or "")
        if not findings:
            return Rejection("missing_findings")
        if not impression:
            return Rejection("missing_impression")
    return CaseRecord(str(patient_id), str(report_id), findings, impression)


def ingest_cases(
    records: Iterable[Mapping],
    registry: ConceptRegistry,
    seed: int,
    ratios: Sequence[float] = DEFAULT_RATIOS,
) -> IngestResult:
    """Parse, split and filter a batch of case records.

    Malformed records are rejected with a reason code and never abort the batch.
    Outputs are in report_id order regardless of input order.
    """
    cases: dict[str, CaseRecord] = {}
    rejections = []
    for lineno, record in enumerate(records, start=1):
        result = record_to_case(record)
        if isinstance(result, Rejection):
            rejections.append({"report_id": record.get("report_id"), "line": lineno,
                               "reason": result.reason, "detail": result.detail})
        elif result.report_id in cases:
            rejections.append({"report_id": result.report_id, "line": lineno,
                               "reason": "malformed", "detail": "duplicate report_id"})
        else:
            cases[result.report_id] = result
    splits = assign_patient_splits(cases.values(), seed, ratios)
    retained = [replace(c, split=splits[c.patient_id]) for _, c in sorted(cases.items())]
    benchmark, easy = [], []
    for case in retained:
        for inst in build_case_instances(case, registry):
            (easy if inst.is_direct_mention else benchmark).append(inst)
    log.info("ingested %d cases (%d rejected), %d benchmark pairs, %d easy-control pairs",
             len(retained), len(rejections), len(benchmark), len(easy))
    return IngestResult(retained, rejections, benchmark, easy, splits)
