import json
import logging

import numpy as np
import pytest

from supportkit.interventions import format_input
from supportkit.scoring import (SYSTEMS, ScoreFileError, ScorerSpec, baseline_lexical_score,
                                load_external_scores, mask_channels, score_rows, write_scores,
                                ScoreRecord)
from supportkit.supervision import construct_supervision

ANCHOR = "Minimal blunting of the right costophrenic angle without gross effusion."

# Hand derivation for the anchor sentence against pleural_effusion:
# vocabulary = {pleural, effusion, effusions, blunting, costophrenic, angle, blunted,
# angles, sharp} (9 tokens); the sentence holds blunting, costophrenic, angle and
# effusion -> overlap 4/9. "effusion" follows the cue "without" -> absence framing.
# With no case text the case term is 0.
OVERLAP = 4 / 9
AGREE = 0.5 + 0.5 * (0.6 * 1 + 0.5 * (OVERLAP - 0.5))       # 0.78611...
DISAGREE = 0.5 + 0.5 * (0.6 * -1 + 0.5 * (OVERLAP - 0.5))    # 0.18611...


def test_empty_evidence_is_neutral(registry):
    f = format_input("Large pleural effusion.", "pleural effusion is present", "")
    assert baseline_lexical_score(f, "pleural_effusion", "present", registry) == 0.5


def test_anchor_sentence_scores(registry):
    agree = baseline_lexical_score(format_input("", "pleural effusion is absent", ANCHOR),
                                   "pleural_effusion", "absent", registry)
    disagree = baseline_lexical_score(format_input("", "pleural effusion is present", ANCHOR),
                                      "pleural_effusion", "present", registry)
    assert agree == pytest.approx(AGREE, abs=1e-15) and agree > 0.5
    assert disagree == pytest.approx(DISAGREE, abs=1e-15)


def test_assertive_framing_against_absent_claim(registry):
    ev = "A moderate right pleural effusion is present."
    # overlap {pleural, effusion} = 2/9, framing present, claim absent
    expected = 0.5 + 0.5 * (-0.6 + 0.5 * (2 / 9 - 0.5))
    got = baseline_lexical_score(format_input("", "pleural effusion is absent", ev),
                                 "pleural_effusion", "absent", registry)
    assert got == pytest.approx(expected, abs=1e-15) and got < 0.5


def test_case_term(registry):
    f = format_input("No effusion.", "pleural effusion is absent", ANCHOR)
    got = baseline_lexical_score(f, "pleural_effusion", "absent", registry)
    assert got == pytest.approx(AGREE + 0.5 * 0.3, abs=1e-15)


def test_mixed_framing_is_neutral_polarity(registry):
    ev = "Large effusion on the left. | No effusion on the right side today."
    f = format_input("", "pleural effusion is absent", ev)
    vocab_hits = 1 / 9
    expected = 0.5 + 0.5 * 0.5 * (vocab_hits - 0.5)
    assert baseline_lexical_score(f, "pleural_effusion", "absent", registry) == pytest.approx(expected)


def test_scorer_spec_validation():
    with pytest.raises(ValueError):
        ScorerSpec(kind="model")
    with pytest.raises(ValueError):
        ScorerSpec(kind="external_file")
    with pytest.raises(ValueError):
        ScorerSpec(overlap_weight=1.5)


def test_masks(worked):
    rows = construct_supervision([worked.instance], worked.pools, worked.policy, worked.registry)
    cases = {worked.case.report_id: worked.case}
    c = next(r for r in rows if r.category == "C")
    s3 = mask_channels(c, SYSTEMS["S3"], cases, worked.universe)
    s2 = mask_channels(c, SYSTEMS["S2"], cases, worked.universe)
    f3, f2 = (dict(zip(("case", "claim", "evidence"), (x.split(": ", 1)[1] for x in f.text.split("\n"))))
              for f in (s3, s2))
    assert all(f3.values())
    assert f2["case"] == "" and f2["claim"] and f2["evidence"]


def test_score_rows_worked_example_deterministic(worked, tmp_path):
    rows = construct_supervision([worked.instance], worked.pools, worked.policy, worked.registry)
    kw = dict(cases={worked.case.report_id: worked.case}, universe=worked.universe,
              registry=worked.registry)
    a = score_rows(rows, ScorerSpec(), SYSTEMS["S3"], "none", **kw)
    b = score_rows(rows, ScorerSpec(), SYSTEMS["S3"], "none", **kw)
    assert len(a) == 4 and a == b
    write_scores(tmp_path / "a.jsonl", a)
    write_scores(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    with pytest.raises(ValueError):
        score_rows(rows, ScorerSpec(), SYSTEMS["S3"], "none")


def _write(path, recs):
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))


def test_external_scores(tmp_path, caplog):
    p = tmp_path / "s.jsonl"
    recs = [{"row_id": "b", "condition_key": "none", "probability": 0.2},
            {"row_id": "a", "condition_key": "none", "probability": 0.9}]
    _write(p, recs)
    out = load_external_scores(p, ["a", "b"])
    assert out == [ScoreRecord("a", "none", 0.9), ScoreRecord("b", "none", 0.2)]
    with caplog.at_level(logging.WARNING):
        assert len(load_external_scores(p, ["a"])) == 1
    assert "unknown row ids" in caplog.text
    with pytest.raises(ScoreFileError, match="'c'"):
        load_external_scores(p, ["a", "b", "c"])
    # a condition filter ignores records of other conditions
    _write(p, recs + [{"row_id": "a", "condition_key": "empty", "probability": 0.5}])
    assert load_external_scores(p, ["a", "b"], "none")[0].probability == 0.9


@pytest.mark.parametrize("bad, msg", [
    ([{"row_id": "a", "condition_key": "none", "probability": 1.3}], "outside"),
    ([{"row_id": "a", "condition_key": "none", "probability": 0.3}] * 2, "duplicate"),
    ([{"row_id": "a", "condition_key": "none"}], "malformed"),
])
def test_external_score_errors(tmp_path, bad, msg):
    p = tmp_path / "s.jsonl"
    _write(p, bad)
    with pytest.raises(ScoreFileError, match=msg) as err:
        load_external_scores(p, ["a"])
    assert f"{p}:" in str(err.value)


def test_external_mode_passthrough(tmp_path, small_dataset):
    rows = small_dataset.rows[:10]
    p = tmp_path / "s.jsonl"
    _write(p, [{"row_id": r.row_id, "condition_key": "none", "probability": i / 10}
               for i, r in enumerate(rows)])
    out = score_rows(rows, ScorerSpec("external_file", str(p)), SYSTEMS["S3"], "none")
    assert [o.probability for o in out] == [i / 10 for i in range(10)]


def test_c_mean_exceeds_d_mean(small_dataset):
    rows = [r for r in small_dataset.rows]
    assert len(rows) >= 200
    recs = score_rows(rows, ScorerSpec(), SYSTEMS["S3"], "none", cases=small_dataset.cases,
                      universe=small_dataset.universe, registry=_reg())
    s = {r.row_id: x.probability for r, x in zip(rows, recs)}
    c = np.mean([s[r.row_id] for r in rows if r.category == "C"])
    d = np.mean([s[r.row_id] for r in rows if r.category == "D"])
    assert c > d
    assert all(0.0 <= v <= 1.0 for v in s.values())


def test_s1_invariant_under_interventions(small_dataset):
    from supportkit.interventions import InterventionSpec, apply_intervention
    rows = small_dataset.rows[:60]
    kw = dict(cases=small_dataset.cases, universe=small_dataset.universe, registry=_reg())
    base = score_rows(rows, ScorerSpec(), SYSTEMS["S1"], "x", **kw)
    for spec in (InterventionSpec("empty"), InterventionSpec("swap", seed=2),
                 InterventionSpec("top_p", p=1)):
        moved = apply_intervention(rows, spec).rows
        assert score_rows(moved, ScorerSpec(), SYSTEMS["S1"], "x", **kw) == base


def _reg():
    from supportkit.synthetic import default_registry
    return default_registry()
