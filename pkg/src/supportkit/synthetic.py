"""Template-generated stand-in corpora and the worked-example fixture.

The generator produces raw radiology-style reports (with FINDINGS and
IMPRESSION blocks) and short reference articles whose sentences land in all
four pool roles for every concept, so that every stage of the pipeline can
run end to end without restricted data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from .corpus import CaseConceptInstance, CaseRecord, build_case_instances, record_to_case
from .evidence import EvidenceUnit, PoolAssignment, index_pools
from .registry import ConceptRegistry
from .seeding import derive_rng
from .supervision import SamplingPolicy
from .text import tokenize

REGISTRY_FILE = "radiology_registry.json"


def default_registry() -> ConceptRegistry:
    """The bundled six-concept chest radiograph registry."""
    with resources.files("supportkit").joinpath("data", REGISTRY_FILE).open(encoding="utf-8") as fh:
        return ConceptRegistry.from_dict(json.load(fh))


def bundled_path(*parts: str) -> Path:
    return Path(str(resources.files("supportkit").joinpath("data", *parts)))


# -- worked example ---------------------------------------------------------

WORKED_REPORT = """\
FINAL REPORT
EXAMINATION: CHEST (PORTABLE AP)

INDICATION: ___ year old woman with right chest tube // ? ptx

COMPARISON: Chest x-ray from ___ EM dated ___. Targeted review of chest CTA from ___.

FINDINGS:

A pigtail catheter overlies the lower right chest new compared with ___. No pneumothorax is detected. Minimal blunting of the right costophrenic angle without gross effusion.

Inspiratory volumes are low and the patient is supine. Hazy opacity in the right perihilar region is non-specific but compatible with atelectasis. Mild increased retrocardiac density is also non-specific but compatible with atelectasis. Extreme left costophrenic angle is excluded from the film, but no gross left-sided effusion is detected.

The cardiomediastinal silhouette is grossly unchanged.

Spinal fixation hardware is seen both in the lower cervical and throughout much of the thoracic spine.

IMPRESSION:

Interval placement of right-sided pigtail catheter. No gross effusion. No pneumothorax detected.

Bilateral opacities are non-specific, but compatible with atelectasis.
"""

WORKED_EVIDENCE = {
    "support_absent": (
        "Classically demonstrated in M-mode, the appearance of which the moniker is derived, "
        "it is specific for the identification of a pleural effusion, although insensitive, "
        "as it may be absent with dense or heavily septated collections."
    ),
    "support_present": (
        'Refer to the article "pleural effusion volume (ultrasound)" for more information.'
    ),
    "nonsupport_hard": (
        "Non-specific changes with ground-glass opacity have been the most commonly reported "
        "findings with nodular consolidation described in a lesser number of patients."
    ),
    "nonsupport_easy": (
        "On chest radiographs, they are seen to cross normal vascular markings and extend "
        "radially from the hilum to the upper lobes."
    ),
}


@dataclass
class WorkedExample:
    raw_report: str
    record: dict
    case: CaseRecord
    instance: CaseConceptInstance
    units: list[EvidenceUnit]
    assignments: list[PoolAssignment]
    policy: SamplingPolicy
    registry: ConceptRegistry

    @property
    def pools(self) -> dict[tuple[str, str], list[str]]:
        return index_pools(self.assignments)

    @property
    def universe(self) -> dict[str, EvidenceUnit]:
        return {u.evidence_id: u for u in self.units}


def worked_example(registry: ConceptRegistry | None = None) -> WorkedExample:
    """One retained case (pleural effusion, gold state absent) with one
    hand-assigned evidence sentence per pool role.

    The case side goes through the real parser, state extraction and shortcut
    filter; the evidence pool roles are fixed by hand, as in a curated fixture.
    """
    registry = registry or default_registry()
    record = {"patient_id": "P-WORKED", "report_id": "R-WORKED", "raw_text": WORKED_REPORT}
    case = record_to_case(record)
    if not isinstance(case, CaseRecord):
        raise RuntimeError(f"worked example failed to parse: {case}")
    case = replace(case, split="train")
    instance = next(i for i in build_case_instances(case, registry) if i.concept_id == "pleural_effusion")
    units, assignments = [], []
    for n, (role, text) in enumerate(WORKED_EVIDENCE.items(), start=1):
        eid = f"WX-{n}#0"
        units.append(EvidenceUnit(eid, f"WX-{n}", 0, text, len(tokenize(text))))
        assignments.append(PoolAssignment("pleural_effusion", eid, role))
    policy = SamplingPolicy(n_support=1, n_wrongstate=1, n_nonsupport=1, hard_easy_mix=0.5,
                            evidence_per_row=1, seed=0)
    return WorkedExample(WORKED_REPORT, record, case, instance, units, assignments, policy, registry)


# -- generator ----------------------------------------------------------------

_FILLER_FINDINGS = (
    "Osseous structures are unremarkable.",
    "A right internal jugular line terminates in the mid superior vena cava.",
    "Degenerative changes are seen in the thoracic spine.",
    "The patient is rotated, limiting assessment of the mediastinum.",
    "Surgical clips project over the upper abdomen.",
    "The trachea is midline.",
    "Overlying monitoring leads are present.",
)

_CONTEXTS = (
    "In adults", "On follow-up imaging", "In the intensive care unit", "After cardiac surgery",
    "In outpatients", "On portable studies", "In elderly patients", "In trauma patients",
)

_PRESENT_TEMPLATES = (
    "{ctx}, {p} is a frequent finding on the frontal chest radiograph.",
    "{ctx}, radiographs typically show {p} in the dependent portions of the chest.",
    "{ctx}, {p} is readily identified when the typical appearance is seen on two projections.",
    "{ctx}, the classic radiographic appearance of {p} is well documented.",
)

_ABSENT_TEMPLATES = (
    "{ctx}, a normal study shows no {p} on either projection.",
    "{ctx}, follow-up radiographs after treatment demonstrate no residual {p}.",
    "{ctx}, the {a} on a normal frontal radiograph.",
    "{ctx}, a radiograph without {p} makes this diagnosis unlikely in the acute setting.",
)

_HARD_TEMPLATES = (
    "{ctx}, {r} is discussed alongside other thoracic conditions.",
    "{ctx}, imaging reports sometimes mention {r} when describing complex studies.",
    "{ctx}, {r} has been described in several case series with variable outcomes.",
    "{ctx}, {p} may mimic other processes on a single view.",
)

_EASY_SENTENCES = (
    "The examination was performed with the patient in the upright position.",
    "Image quality depends on patient positioning and the exposure settings used.",
    "Comparison with prior studies is recommended whenever they are available.",
    "Degenerative changes of the thoracic spine are common in elderly patients.",
    "Skin folds and external monitoring leads are frequent sources of artifact.",
    "The bony thorax should be inspected for fractures on every study.",
    "Old granulomatous disease leaves small calcified nodules in many adults.",
    "Portable technique limits evaluation of the retrocardiac region in many cases.",
    "Surgical clips in the upper abdomen are a common incidental finding.",
    "Technologists record the projection and the tube distance for every exposure.",
)


@dataclass
class SyntheticConfig:
    seed: int = 0
    n_cases: int = 200
    n_articles: int = 60
    mention_rate: float = 0.5
    prevalence: float | Mapping[str, float] = 0.35
    direct_mention_rate: float = 0.3
    negation_rate: float = 0.6
    malformed_rate: float = 0.02
    include_worked_example: bool = True

    def prevalence_of(self, concept_id: str) -> float:
        if isinstance(self.prevalence, Mapping):
            return float(self.prevalence.get(concept_id, 0.35))
        return float(self.prevalence)


@dataclass
class SyntheticCorpus:
    cases: list[dict]
    articles: list[dict]
    config: SyntheticConfig = field(default_factory=SyntheticConfig)

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"cases": out / "cases.jsonl", "articles": out / "articles.jsonl"}
        for key, records in (("cases", self.cases), ("articles", self.articles)):
            with open(paths[key], "w", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return paths


def _cap(text: str) -> str:
    return text[:1].upper() + text[1:]


def _impression_sentence(concept, state, rng, negation_rate) -> str:
    p = concept.present_patterns[0]
    if state == "present":
        return str(rng.choice([f"{_cap(p)}.", f"Small {p}.", f"Findings compatible with {p}."]))
    if rng.random() < negation_rate or not concept.absent_patterns:
        return f"No {p}."
    return f"The {concept.absent_patterns[0]}."


def _findings_sentence(concept, state, rng, direct_rate, negation_rate) -> str:
    p = concept.present_patterns[0]
    if rng.random() < direct_rate:
        if state == "present":
            return f"There is {p} at the {rng.choice(['right', 'left'])} base."
        return f"Interval resolution of the previously seen {p}."
    if state == "present":
        terms = concept.related_terms or ("an indeterminate opacity",)
        return f"{_cap(str(rng.choice(terms)))} is noted on this study."
    if rng.random() < negation_rate or not concept.absent_patterns:
        return f"No {p} is identified."
    return f"The {concept.absent_patterns[0]}."


def _make_report(findings: list[str], impression: list[str], drop_impression: bool) -> str:
    parts = ["FINAL REPORT", "EXAMINATION: CHEST (PA AND LAT)", "",
             "INDICATION: ___ year old with shortness of breath", "",
             "FINDINGS:", "", " ".join(findings), ""]
    if not drop_impression:
        parts += ["IMPRESSION:", "", " ".join(impression), ""]
    return "\n".join(parts)


def _generate_cases(cfg: SyntheticConfig, registry: ConceptRegistry) -> list[dict]:
    rng = derive_rng(cfg.seed, "synthetic-cases")
    concepts = list(registry)
    n_patients = max(1, int(round(cfg.n_cases * 0.8)))
    cases = []
    for i in range(cfg.n_cases):
        mentioned = [c for c in concepts if rng.random() < cfg.mention_rate]
        if not mentioned:
            mentioned = [concepts[int(rng.integers(len(concepts)))]]
        findings = [str(rng.choice(_FILLER_FINDINGS))]
        impression = []
        for concept in mentioned:
            state = "present" if rng.random() < cfg.prevalence_of(concept.concept_id) else "absent"
            findings.append(_findings_sentence(concept, state, rng, cfg.direct_mention_rate,
                                               cfg.negation_rate))
            impression.append(_impression_sentence(concept, state, rng, cfg.negation_rate))
        findings.append(str(rng.choice(_FILLER_FINDINGS)))
        drop = bool(rng.random() < cfg.malformed_rate)
        cases.append({
            "patient_id": f"P{int(rng.integers(n_patients)):05d}",
            "report_id": f"R{i:05d}",
            "raw_text": _make_report(findings, impression, drop),
        })
    if cfg.include_worked_example:
        cases.append({"patient_id": "P-WORKED", "report_id": "R-WORKED", "raw_text": WORKED_REPORT})
    return cases


def _generate_articles(cfg: SyntheticConfig, registry: ConceptRegistry) -> list[dict]:
    rng = derive_rng(cfg.seed, "synthetic-articles")
    concepts = sorted(registry, key=lambda c: c.concept_id)
    articles = []
    for j in range(cfg.n_articles):
        concept = concepts[j % len(concepts)]
        ctx = lambda: str(rng.choice(_CONTEXTS))  # noqa: E731
        p = lambda: str(rng.choice(concept.present_patterns))  # noqa: E731
        a = concept.absent_patterns[0] if concept.absent_patterns else concept.present_patterns[0]
        terms = concept.related_terms or concept.present_patterns
        sentences = []
        for template in rng.choice(_PRESENT_TEMPLATES, size=2, replace=False):
            sentences.append(template.format(ctx=ctx(), p=p()))
        absent_pool = [t for t in _ABSENT_TEMPLATES if concept.absent_patterns or "{a}" not in t]
        for template in rng.choice(absent_pool, size=2, replace=False):
            sentences.append(template.format(ctx=ctx(), p=concept.present_patterns[0], a=a))
        for template in rng.choice(_HARD_TEMPLATES, size=2, replace=False):
            sentences.append(template.format(ctx=ctx(), r=str(rng.choice(terms)), p=p()))
        sentences = [_cap(s) for s in sentences]
        easy = [str(s) for s in rng.choice(_EASY_SENTENCES, size=3, replace=False)]
        order = rng.permutation(len(sentences))
        body_sentences = [sentences[k] for k in order]
        paragraphs = [
            " ".join(body_sentences[:3] + easy[:1]),
            " ".join(body_sentences[3:] + easy[1:]),
            "See also: related articles",
        ]
        articles.append({
            "article_id": f"A{j:04d}",
            "title": f"{_cap(concept.name)} notes {j}",
            "body_text": "\n\n".join(paragraphs),
        })
    return articles


def generate_synthetic_corpus(
    seed: int = 0,
    n_cases: int = 200,
    n_articles: int = 60,
    registry: ConceptRegistry | None = None,
    **options,
) -> SyntheticCorpus:
    """Seeded synthetic cases and articles.

    ``options`` set the remaining :class:`SyntheticConfig` fields
    (prevalence, direct_mention_rate, negation_rate, ...).
    """
    registry = registry or default_registry()
    if len(registry) < 2:
        raise ValueError("the synthetic generator needs at least two concepts")
    cfg = SyntheticConfig(seed=seed, n_cases=n_cases, n_articles=n_articles, **options)
    return SyntheticCorpus(_generate_cases(cfg, registry), _generate_articles(cfg, registry), cfg)
