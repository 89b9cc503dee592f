"""Evidence-channel interventions, evidence materialization, input formatting
and tail truncation.

Interventions only ever touch ``evidence_ids``; case, claim, label and
row_id stay fixed so every condition joins back to the same rows.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .evidence import EvidenceSplit, EvidenceUnit, PoolAssignment, index_pools
from .seeding import derive_rng
from .supervision import VerifierRow
from .text import tokenize, truncate_text

log = logging.getLogger(__name__)

KINDS = ("none", "empty", "swap", "heldout", "top_p")
DEFAULT_DELIMITER = " | "
_KEY_RE = re.compile(r"^(none|empty|swap-(-?\d+)|heldout-(-?\d+)|top(\d+))$")


@dataclass(frozen=True)
class InterventionSpec:
    kind: str
    p: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        if (self.kind == "top_p") != (self.p is not None):
            raise ValueError("p is required for top_p and only for top_p")
        if self.p is not None and self.p < 1:
            raise ValueError("p must be a positive integer")
        if (self.kind in ("swap", "heldout")) != (self.seed is not None):
            raise ValueError("seed is required for swap/heldout and only for them")

    @property
    def key(self) -> str:
        if self.kind in ("swap", "heldout"):
            return f"{self.kind}-{self.seed}"
        if self.kind == "top_p":
            return f"top{self.p}"
        return self.kind

    @classmethod
    def from_key(cls, key: str) -> "InterventionSpec":
        m = _KEY_RE.match(key)
        if not m:
            raise ValueError(f"bad condition key {key!r}")
        if m.group(2) is not None:
            return cls("swap", seed=int(m.group(2)))
        if m.group(3) is not None:
            return cls("heldout", seed=int(m.group(3)))
        if m.group(4) is not None:
            return cls("top_p", p=int(m.group(4)))
        return cls(key)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "seed": self.seed, "key": self.key}


@dataclass(frozen=True)
class SwapPlan:
    permutation: tuple[int, ...]

    def __post_init__(self):
        n = len(self.permutation)
        if sorted(self.permutation) != list(range(n)):
            raise ValueError("permutation is not a bijection")
        if n >= 2 and any(i == j for i, j in enumerate(self.permutation)):
            raise ValueError("permutation has a fixed point")


@dataclass(frozen=True)
class FormattedInput:
    text: str
    token_len: int
    truncated: bool = False


def materialize_evidence(
    evidence_ids: Sequence[str],
    universe: Mapping[str, EvidenceUnit | str],
    delimiter: str = DEFAULT_DELIMITER,
) -> str:
    """Ordered concatenation of evidence sentences; no ids gives ''."""
    parts = []
    for eid in evidence_ids:
        try:
            unit = universe[eid]
        except KeyError:
            raise KeyError(f"unresolvable evidence id {eid!r}") from None
        parts.append(unit.text if isinstance(unit, EvidenceUnit) else unit)
    return delimiter.join(parts)


def format_input(case_text: str, claim_text: str, evidence_text: str) -> FormattedInput:
    """Render the fixed Case/Claim/Evidence template; empty fields keep their labels."""
    if not claim_text:
        raise ValueError("claim_text must be non-empty")
    text = f"Case: {case_text}\nClaim: {claim_text}\nEvidence: {evidence_text}"
    return FormattedInput(text, len(tokenize(text)))


def split_fields(formatted: FormattedInput | str) -> dict[str, str]:
    """Recover the case, claim and evidence fields of a rendered input.

    Fields cut away by truncation come back as ''.
    """
    text = formatted.text if isinstance(formatted, FormattedInput) else formatted
    out = {"case": "", "claim": "", "evidence": ""}
    for label, line in zip(out, text.split("\n", 2)):
        prefix = f"{label.capitalize()}: "
        if line.startswith(prefix):
            out[label] = line[len(prefix):]
    return out


def truncate_input(formatted: FormattedInput, budget: int) -> FormattedInput:
    """Pure tail cut of the rendered sequence to at most ``budget`` tokens."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    text, n, cut = truncate_text(formatted.text, budget)
    if not cut:
        return FormattedInput(formatted.text, formatted.token_len, formatted.truncated)
    return FormattedInput(text, n, True)


def make_swap_plan(n: int, seed: int) -> SwapPlan:
    """Seeded uniform derangement by rejection sampling."""
    if n < 2:
        raise ValueError("a derangement needs at least two rows")
    rng = derive_rng(seed, "swap-plan", n)
    identity = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == identity):
            return SwapPlan(tuple(int(i) for i in perm))


def heldout_pool_index(
    assignments: Sequence[PoolAssignment],
    units: Sequence[EvidenceUnit],
    split: EvidenceSplit,
) -> dict[tuple[str, str], list[str]]:
    """Pool index restricted to evidence from held-out articles."""
    allowed = {u.evidence_id for u in units if u.article_id in split.heldout_article_ids}
    return index_pools(assignments, allowed)


@dataclass
class ConditionResult:
    spec: InterventionSpec
    rows: list[VerifierRow]
    dropped: list[dict] = field(default_factory=list)

    @property
    def key(self) -> str:
        return self.spec.key

    def manifest(self) -> dict:
        return {"key": self.key, "spec": self.spec.to_dict(), "n_rows": len(self.rows),
                "dropped": self.dropped}


def apply_intervention(
    rows: Sequence[VerifierRow],
    spec: InterventionSpec,
    pools: Mapping[tuple[str, str], Sequence[str]] | None = None,
) -> ConditionResult:
    """Transform the evidence channel of ``rows`` under ``spec``.

    ``pools`` is only used by the held-out condition and must be restricted
    to held-out articles (see :func:`heldout_pool_index`). Held-out re-draws
    keep each row's construction role and package size; rows whose role has
    no held-out evidence are dropped and reported.
    """
    rows = list(rows)
    if spec.kind == "none":
        return ConditionResult(spec, rows)
    if spec.kind == "empty":
        return ConditionResult(spec, [replace(r, evidence_ids=()) for r in rows])
    if spec.kind == "top_p":
        return ConditionResult(spec, [replace(r, evidence_ids=r.evidence_ids[: spec.p]) for r in rows])
    if spec.kind == "swap":
        plan = make_swap_plan(len(rows), spec.seed)
        return ConditionResult(
            spec, [replace(r, evidence_ids=rows[j].evidence_ids) for r, j in zip(rows, plan.permutation)]
        )
    # heldout
    if pools is None:
        raise ValueError("the heldout condition needs held-out pools")
    out, dropped = [], []
    for r in rows:
        if not r.evidence_ids:
            out.append(r)
            continue
        pool = list(pools.get((r.concept_id, r.evidence_role), ()))
        if not pool:
            dropped.append({"row_id": r.row_id, "reason": f"empty held-out pool {r.concept_id}/{r.evidence_role}"})
            continue
        rng = derive_rng(spec.seed, "heldout", r.row_id)
        size = min(len(r.evidence_ids), len(pool))
        picks = rng.choice(len(pool), size=size, replace=False)
        out.append(replace(r, evidence_ids=tuple(pool[i] for i in picks)))
    if dropped:
        log.warning("heldout-%s dropped %d rows with empty held-out pools", spec.seed, len(dropped))
    return ConditionResult(spec, out, dropped)
