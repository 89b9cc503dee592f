"""Walk one report through supervision, interventions and scoring.

Run: python demos/worked_example.py
"""

from supportkit.corpus import shortcut_filter
from supportkit.interventions import InterventionSpec, apply_intervention
from supportkit.scoring import SYSTEMS, ScorerSpec, mask_channels, score_rows
from supportkit.supervision import compute_diagnostics, construct_supervision
from supportkit.synthetic import worked_example

w = worked_example()
print("findings:  ", w.case.findings_text)
print("impression:", w.case.impression_text)
print("gold state:", w.instance.concept_id, "->", w.instance.gold_state)

sc = shortcut_filter(w.case.findings_text, w.instance.concept_id, w.registry)
print(f"anchor ({sc.anchor_confidence}): {sc.anchor_sentence!r}\n")

rows = construct_supervision([w.instance], w.pools, w.policy, w.registry)
cases = {w.case.report_id: w.case}
for r in rows:
    ev = " | ".join(w.universe[e].text for e in r.evidence_ids)
    print(f"{r.category}  label={r.label}  claim={r.claim.claim_text!r}\n   evidence: {ev}")

d = compute_diagnostics(rows)
print(f"\npositive fraction {d.positive_fraction:.2f}, wrong-state fraction {d.wrong_state_fraction:.2f}")

print("\nS3 input for the C row:")
c = next(r for r in rows if r.category == "C")
print(mask_channels(c, SYSTEMS["S3"], cases, w.universe).text)

# the lexical baseline reads surface framing only; these hand-placed sentences mislead it,
# which is the kind of behaviour the swap and empty conditions expose on a real corpus
print("\nbaseline scores per condition (S3):")
for spec in (InterventionSpec("none"), InterventionSpec("swap", seed=0), InterventionSpec("empty")):
    moved = apply_intervention(rows, spec).rows
    recs = score_rows(moved, ScorerSpec(), SYSTEMS["S3"], spec.key, cases=cases,
                      universe=w.universe, registry=w.registry)
    cells = "  ".join(f"{r.category}={x.probability:.3f}" for r, x in zip(moved, recs))
    print(f"  {spec.key:<7} {cells}")
