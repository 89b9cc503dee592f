"""Verifier supervision, evidence interventions and evaluation for checking
claims about a specific case against retrieved evidence."""

__version__ = "0.1.0"

from .corpus import CaseConceptInstance, CaseRecord, Claim, ingest_cases, parse_report
from .evaluation import (DecisionPolicy, apply_decision_policy, bootstrap_evaluate, brier,
                         confusion_at, intervention_gap, paired_bootstrap_diff, pr_auc, roc_auc,
                         select_threshold_youden, thresholded_metrics)
from .evidence import EvidenceUnit, PoolAssignment, build_evidence
from .interventions import InterventionSpec, apply_intervention, format_input, make_swap_plan
from .registry import Concept, ConceptRegistry
from .scoring import SYSTEMS, ChannelMask, ScorerSpec, baseline_lexical_score, score_rows
from .supervision import SamplingPolicy, VerifierRow, compute_diagnostics, construct_supervision
from .synthetic import default_registry, generate_synthetic_corpus, worked_example
from .text import segment_sentences, tokenize

__all__ = [
    "CaseConceptInstance", "CaseRecord", "ChannelMask", "Claim", "Concept", "ConceptRegistry",
    "DecisionPolicy", "EvidenceUnit", "InterventionSpec", "PoolAssignment", "SYSTEMS",
    "SamplingPolicy", "ScorerSpec", "VerifierRow", "apply_decision_policy", "apply_intervention",
    "baseline_lexical_score", "bootstrap_evaluate", "brier", "build_evidence", "compute_diagnostics",
    "confusion_at", "construct_supervision", "default_registry", "format_input",
    "generate_synthetic_corpus", "ingest_cases", "intervention_gap", "make_swap_plan",
    "paired_bootstrap_diff", "parse_report", "pr_auc", "roc_auc", "score_rows",
    "segment_sentences", "select_threshold_youden", "thresholded_metrics", "tokenize",
    "worked_example",
]
