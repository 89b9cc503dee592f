"""The support-structured supervision operator.

For each benchmark case-concept pair with gold state ``s``:

* packages from the ``s`` support pool give label-1 category C rows with claim ``s``;
* packages from the opposite support pool give label-0 category D rows with the
  opposite claim;
* packages from the hard/easy non-support pools give a label-0 category A row
  (claim present) *and* a label-0 category B row (claim absent) each.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import CaseConceptInstance, Claim
from .evidence import SUPPORT_ROLE
from .registry import ConceptRegistry, opposite
from .seeding import content_digest, derive_rng

log = logging.getLogger(__name__)

CATEGORIES = ("A", "B", "C", "D")


@dataclass(frozen=True)
class VerifierRow:
    row_id: str
    report_id: str
    concept_id: str
    claim: Claim
    evidence_ids: tuple[str, ...]
    label: int
    category: str
    split: str | None
    gold_state: str
    evidence_role: str  # pool role the package was drawn from at construction

    def to_dict(self) -> dict:
        return {
            "row_id": self.row_id,
            "report_id": self.report_id,
            "concept_id": self.concept_id,
            "claim": self.claim.to_dict(),
            "evidence_ids": list(self.evidence_ids),
            "label": self.label,
            "category": self.category,
            "split": self.split,
            "gold_state": self.gold_state,
            "evidence_role": self.evidence_role,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "VerifierRow":
        claim = d["claim"]
        return cls(
            row_id=d["row_id"],
            report_id=d["report_id"],
            concept_id=d["concept_id"],
            claim=Claim(claim["concept_id"], claim["state"], claim["claim_text"]),
            evidence_ids=tuple(d["evidence_ids"]),
            label=int(d["label"]),
            category=d["category"],
            split=d.get("split"),
            gold_state=d["gold_state"],
            evidence_role=d["evidence_role"],
        )


@dataclass(frozen=True)
class SamplingPolicy:
    n_support: int = 1
    n_wrongstate: int = 1
    n_nonsupport: int = 2
    hard_easy_mix: float = 0.5
    evidence_per_row: int = 2
    seed: int = 0

    def __post_init__(self):
        if min(self.n_support, self.n_wrongstate, self.n_nonsupport) < 0:
            raise ValueError("draw counts must be nonnegative")
        if not 0.0 <= self.hard_easy_mix <= 1.0:
            raise ValueError("hard_easy_mix must lie in [0, 1]")
        if self.evidence_per_row < 1:
            raise ValueError("evidence_per_row must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


def expected_row_count(n_s: int, n_sbar: int, n_0: int) -> int:
    """Rows contributed by one case-concept pair: non-support draws count twice."""
    return n_s + n_sbar + 2 * n_0


def row_id_for(report_id: str, concept_id: str, category: str, state: str,
               evidence_ids: Sequence[str]) -> str:
    return content_digest(report_id, concept_id, category, state, ",".join(evidence_ids))


def _draw_packages(pool: Sequence[str], n_packages: int, size: int, rng) -> list[tuple[str, ...]]:
    """Up to ``n_packages`` disjoint ordered packages, sampled without replacement."""
    if n_packages <= 0 or not pool:
        return []
    shuffled = [pool[i] for i in rng.permutation(len(pool))]
    packages = [tuple(shuffled[i : i + size]) for i in range(0, len(shuffled), size)]
    return packages[:n_packages]


def _nonsupport_packages(hard, easy, policy: SamplingPolicy, rng_for):
    n = policy.n_nonsupport
    want_hard = math.floor(policy.hard_easy_mix * n + 0.5)
    hard_pk = _draw_packages(hard, n, policy.evidence_per_row, rng_for("nonsupport_hard"))
    easy_pk = _draw_packages(easy, n, policy.evidence_per_row, rng_for("nonsupport_easy"))
    take_h = min(want_hard, len(hard_pk))
    take_e = min(n - want_hard, len(easy_pk))
    # a short pool is topped up from the other one
    short = n - take_h - take_e
    extra_h = min(short, len(hard_pk) - take_h)
    take_h += extra_h
    take_e += min(short - extra_h, len(easy_pk) - take_e)
    return ([("nonsupport_hard", p) for p in hard_pk[:take_h]]
            + [("nonsupport_easy", p) for p in easy_pk[:take_e]])


def construct_supervision(
    cases: Iterable[CaseConceptInstance],
    pools: Mapping[tuple[str, str], Sequence[str]],
    policy: SamplingPolicy,
    registry: ConceptRegistry,
) -> list[VerifierRow]:
    """Build labeled A/B/C/D verifier rows.

    ``pools`` maps (concept_id, role) to evidence ids. Empty pools yield zero
    rows of the matching category for the pair; construction never aborts.
    Rows come out in (report_id, concept_id, category, draw index) order.
    """
    rows: list[VerifierRow] = []
    empty_pool_events = 0
    for inst in sorted(cases, key=lambda i: (i.report_id, i.concept_id)):
        if inst.is_direct_mention:
            raise ValueError(f"{inst.report_id}/{inst.concept_id} is a direct mention; "
                             "easy-control pairs do not enter the benchmark")
        s = inst.gold_state
        sbar = opposite(s)
        concept = registry[inst.concept_id]

        def rng_for(role, _inst=inst):
            return derive_rng(policy.seed, "supervision", _inst.report_id, _inst.concept_id, role)

        def pool(role, _inst=inst):
            return pools.get((_inst.concept_id, role), ())

        draws = {
            "C": [(SUPPORT_ROLE[s], p) for p in _draw_packages(
                pool(SUPPORT_ROLE[s]), policy.n_support, policy.evidence_per_row,
                rng_for(SUPPORT_ROLE[s]))],
            "D": [(SUPPORT_ROLE[sbar], p) for p in _draw_packages(
                pool(SUPPORT_ROLE[sbar]), policy.n_wrongstate, policy.evidence_per_row,
                rng_for(SUPPORT_ROLE[sbar]))],
        }
        nonsupport = _nonsupport_packages(pool("nonsupport_hard"), pool("nonsupport_easy"),
                                          policy, rng_for)
        draws["A"] = nonsupport
        draws["B"] = nonsupport
        needed = {"C": policy.n_support, "D": policy.n_wrongstate, "A": policy.n_nonsupport}
        for cat, n in needed.items():
            if n > 0 and not draws[cat]:
                empty_pool_events += 1
                log.debug("no %s rows for %s/%s: empty pool", cat, inst.report_id, inst.concept_id)

        claim_state = {"A": "present", "B": "absent", "C": s, "D": sbar}
        for cat in CATEGORIES:
            state = claim_state[cat]
            claim = Claim(inst.concept_id, state, concept.render_claim(state))
            for role, package in draws[cat]:
                rows.append(VerifierRow(
                    row_id=row_id_for(inst.report_id, inst.concept_id, cat, state, package),
                    report_id=inst.report_id,
                    concept_id=inst.concept_id,
                    claim=claim,
                    evidence_ids=package,
                    label=1 if cat == "C" else 0,
                    category=cat,
                    split=inst.split,
                    gold_state=s,
                    evidence_role=role,
                ))
    if empty_pool_events:
        log.info("%d case-concept/category combinations had an empty pool", empty_pool_events)
    return rows


@dataclass
class SupervisionDiagnostics:
    total_rows: int
    positive_fraction: float
    wrong_state_fraction: float | None
    concept_distribution: dict[str, float]
    mean_rows_per_case: float
    mean_rows_per_concept: float
    claim_polarity_fractions: dict[str, float]
    category_counts: dict[str, int]
    per_split: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _summary(rows: Sequence[VerifierRow]) -> dict:
    n = len(rows)
    cats = Counter(r.category for r in rows)
    negatives = cats["A"] + cats["B"] + cats["D"]
    concepts = Counter(r.concept_id for r in rows)
    polarity = Counter(r.claim.state for r in rows)
    return {
        "total_rows": n,
        "positive_fraction": cats["C"] / n,
        "wrong_state_fraction": cats["D"] / negatives if negatives else None,
        "concept_distribution": {k: concepts[k] / n for k in sorted(concepts)},
        "mean_rows_per_case": n / len({r.report_id for r in rows}),
        "mean_rows_per_concept": n / len(concepts),
        "claim_polarity_fractions": {s: polarity[s] / n for s in ("present", "absent")},
        "category_counts": {c: cats[c] for c in CATEGORIES},
    }


def compute_diagnostics(rows: Sequence[VerifierRow]) -> SupervisionDiagnostics:
    """Structural statistics of a constructed verifier dataset."""
    if not rows:
        raise ValueError("diagnostics are undefined for an empty dataset")
    by_split: dict[str, list[VerifierRow]] = defaultdict(list)
    for r in rows:
        by_split[r.split or "unassigned"].append(r)
    return SupervisionDiagnostics(
        **_summary(rows),
        per_split={k: _summary(v) for k, v in sorted(by_split.items())},
    )


def realized_draws(rows: Iterable[VerifierRow]) -> dict[tuple[str, str], dict[str, int]]:
    """Per case-concept category counts (used to check the row-count identity)."""
    out: dict[tuple[str, str], Counter] = defaultdict(Counter)
    for r in rows:
        out[(r.report_id, r.concept_id)][r.category] += 1
    return {k: {c: v[c] for c in CATEGORIES} for k, v in out.items()}
