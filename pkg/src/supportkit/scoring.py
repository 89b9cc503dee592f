"""Scorer boundary: channel masks for the S1/S2/S3 systems, a lexical
baseline scorer for desk-scale runs, and validated external score files.

Real verifiers plug in through score files (one JSON object per line with
``row_id``, ``condition_key`` and ``probability``); nothing here runs a model.
"""

from __future__ import annotations

import json
import logging
from functools import lru_cache
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import CaseRecord
from .evidence import EvidenceUnit
from .interventions import (DEFAULT_DELIMITER, FormattedInput, format_input,
                            materialize_evidence, split_fields, truncate_input)
from .registry import Concept, ConceptRegistry, sentence_framing, text_framing
from .supervision import VerifierRow
from .text import segment_sentences, tokenize

log = logging.getLogger(__name__)


class ScoreFileError(ValueError):
    """A score file failed validation."""


@dataclass(frozen=True)
class ChannelMask:
    use_case: bool = True
    use_evidence: bool = True


SYSTEMS = {
    "S1": ChannelMask(use_case=True, use_evidence=False),
    "S2": ChannelMask(use_case=False, use_evidence=True),
    "S3": ChannelMask(use_case=True, use_evidence=True),
}


@dataclass(frozen=True)
class ScoreRecord:
    row_id: str
    condition_key: str
    probability: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScorerSpec:
    kind: str = "baseline_lexical"
    path: str | None = None
    overlap_weight: float = 0.5
    polarity_weight: float = 0.6
    case_weight: float = 0.3

    def __post_init__(self):
        if self.kind not in ("baseline_lexical", "external_file"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "external_file" and not self.path:
            raise ValueError("external_file scorer needs a path")
        for w in (self.overlap_weight, self.polarity_weight, self.case_weight):
            if not 0.0 <= w <= 1.0:
                raise ValueError("baseline weights must lie in [0, 1]")


def _case_text(cases: Mapping[str, CaseRecord | str], report_id: str) -> str:
    case = cases[report_id]
    return case.findings_text if isinstance(case, CaseRecord) else case


def mask_channels(
    row: VerifierRow,
    mask: ChannelMask,
    cases: Mapping[str, CaseRecord | str],
    universe: Mapping[str, EvidenceUnit | str],
    *,
    delimiter: str = DEFAULT_DELIMITER,
    budget: int | None = None,
) -> FormattedInput:
    """Formatted input of ``row`` with the masked channels left empty."""
    case = _case_text(cases, row.report_id) if mask.use_case else ""
    evidence = (materialize_evidence(row.evidence_ids, universe, delimiter)
                if mask.use_evidence else "")
    formatted = format_input(case, row.claim.claim_text, evidence)
    return truncate_input(formatted, budget) if budget else formatted


@lru_cache(maxsize=65536)
def _chunk_framings(chunk: str, concept: Concept) -> frozenset[str]:
    """Non-null sentence framings found in one evidence chunk."""
    out = {sentence_framing(tokenize(s), concept) for s in segment_sentences(chunk)}
    out.discard(None)
    return frozenset(out)


def baseline_lexical_score(
    formatted: FormattedInput,
    concept_id: str,
    claim_state: str,
    registry: ConceptRegistry,
    *,
    overlap_weight: float = 0.5,
    polarity_weight: float = 0.6,
    case_weight: float = 0.3,
    delimiter: str = DEFAULT_DELIMITER,
) -> float:
    """Deterministic support score in [0, 1].

    ``0.5 + 0.5 * (polarity_weight * agreement + overlap_weight * (overlap - 0.5)
    + case_weight * case_agreement)`` clipped to [0, 1]. ``overlap`` is the share
    of the concept vocabulary found in the evidence; ``agreement`` is +1 / -1 / 0
    when the evidence framing matches / contradicts / does not address the claim
    state, and ``case_agreement`` is the same comparison for the case field.
    Empty evidence scores exactly 0.5.
    """
    fields = split_fields(formatted)
    evidence = fields["evidence"].strip()
    if not evidence:
        return 0.5
    concept = registry[concept_id]
    vocab = concept.vocabulary()
    overlap = len(vocab.intersection(tokenize(evidence))) / len(vocab) if vocab else 0.0
    sep = delimiter.strip()
    framings: set[str] = set()
    for chunk in evidence.split(sep) if sep else [evidence]:
        framings.update(_chunk_framings(chunk, concept))
    if len(framings) == 1:
        agreement = 1.0 if framings.pop() == claim_state else -1.0
    else:
        agreement = 0.0
    case_framing = text_framing(fields["case"], concept) if fields["case"].strip() else None
    case_agreement = 0.0 if case_framing is None else (1.0 if case_framing == claim_state else -1.0)
    score = 0.5 + 0.5 * (polarity_weight * agreement + overlap_weight * (overlap - 0.5)
                         + case_weight * case_agreement)
    return min(1.0, max(0.0, score))


def load_external_scores(
    path: str | Path,
    expected_row_ids: Sequence[str],
    condition_key: str | None = None,
) -> list[ScoreRecord]:
    """Read and validate a score file; records come back in expected order.

    Extra row ids only warn; missing ids, duplicates, malformed lines and
    probabilities outside [0, 1] raise :class:`ScoreFileError`.
    """
    found: dict[str, ScoreRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = ScoreRecord(str(obj["row_id"]), str(obj["condition_key"]),
                                  float(obj["probability"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ScoreFileError(f"{path}:{lineno}: malformed score line ({exc})") from None
            if condition_key is not None and rec.condition_key != condition_key:
                continue
            if not 0.0 <= rec.probability <= 1.0:
                raise ScoreFileError(
                    f"{path}:{lineno}: probability {rec.probability} outside [0, 1]")
            if rec.row_id in found:
                raise ScoreFileError(f"{path}:{lineno}: duplicate row_id {rec.row_id!r} "
                                     f"for condition {rec.condition_key!r}")
            found[rec.row_id] = rec
    expected = list(expected_row_ids)
    missing = [rid for rid in expected if rid not in found]
    if missing:
        raise ScoreFileError(f"{path}: missing scores for {len(missing)} rows: {missing}")
    extra = set(found) - set(expected)
    if extra:
        log.warning("%s: ignoring %d scores for unknown row ids", path, len(extra))
    return [found[rid] for rid in expected]


def format_rows(
    rows: Sequence[VerifierRow],
    mask: ChannelMask,
    cases: Mapping[str, CaseRecord | str],
    universe: Mapping[str, EvidenceUnit | str],
    *,
    delimiter: str = DEFAULT_DELIMITER,
    budget: int | None = None,
) -> list[FormattedInput]:
    return [mask_channels(r, mask, cases, universe, delimiter=delimiter, budget=budget)
            for r in rows]


def score_formatted(
    rows: Sequence[VerifierRow],
    formatted: Sequence[FormattedInput],
    scorer: ScorerSpec,
    condition_key: str,
    registry: ConceptRegistry,
    *,
    delimiter: str = DEFAULT_DELIMITER,
) -> list[ScoreRecord]:
    """Baseline scores for already rendered inputs."""
    if len(rows) != len(formatted):
        raise ValueError("rows and formatted inputs are not aligned")
    return [
        ScoreRecord(row.row_id, condition_key, baseline_lexical_score(
            f, row.concept_id, row.claim.state, registry,
            overlap_weight=scorer.overlap_weight, polarity_weight=scorer.polarity_weight,
            case_weight=scorer.case_weight, delimiter=delimiter,
        ))
        for row, f in zip(rows, formatted)
    ]


def score_rows(
    rows: Sequence[VerifierRow],
    scorer: ScorerSpec,
    mask: ChannelMask,
    condition_key: str,
    *,
    cases: Mapping[str, CaseRecord | str] | None = None,
    universe: Mapping[str, EvidenceUnit | str] | None = None,
    registry: ConceptRegistry | None = None,
    delimiter: str = DEFAULT_DELIMITER,
    budget: int | None = None,
) -> list[ScoreRecord]:
    """One ScoreRecord per row, in row order."""
    if scorer.kind == "external_file":
        recs = load_external_scores(scorer.path, [r.row_id for r in rows], condition_key)
        return [ScoreRecord(r.row_id, condition_key, r.probability) for r in recs]
    if cases is None or universe is None or registry is None:
        raise ValueError("the baseline scorer needs cases, universe and registry")
    formatted = format_rows(rows, mask, cases, universe, delimiter=delimiter, budget=budget)
    return score_formatted(rows, formatted, scorer, condition_key, registry, delimiter=delimiter)


def write_scores(path: str | Path, records: Iterable[ScoreRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
