"""Exit criteria for the build, one test per criterion.

Each test prints a single ``CRITERION n PASS|FAIL`` line; the lines are also
collected into the terminal summary.
"""

import shutil
import time
from collections import Counter

import numpy as np
import pytest

from supportkit.corpus import CaseRecord, assign_patient_splits
from supportkit.evaluation import (DecisionPolicy, apply_decision_policy, bootstrap_evaluate,
                                   brier, confusion_at, evaluate_condition, paired_bootstrap_diff,
                                   pr_auc, roc_auc, select_threshold_youden, thresholded_metrics)
from supportkit.interventions import (InterventionSpec, apply_intervention, heldout_pool_index,
                                      make_swap_plan)
from supportkit.pipeline import PipelineConfig, read_json, run_pipeline
from supportkit.scoring import SYSTEMS, mask_channels
from supportkit.supervision import (SamplingPolicy, compute_diagnostics, construct_supervision,
                                    expected_row_count, realized_draws)
from supportkit.synthetic import worked_example

from builders import build_dataset
from oracles import (auroc_pairwise, average_precision_cutpoints, confusion_loop,
                     thresholded_by_hand, youden_scan)

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []


def report(n, name, ok, detail=""):
    line = f"CRITERION {n:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    print(line)
    RESULTS.append(line)
    assert ok, line


def test_criterion_01_worked_example():
    t0 = time.perf_counter()
    w = worked_example()
    rows = construct_supervision([w.instance], w.pools, w.policy, w.registry)
    elapsed = time.perf_counter() - t0
    got = sorted((r.category, r.claim.state, r.label) for r in rows)
    want = sorted([("C", "absent", 1), ("D", "present", 0), ("A", "present", 0), ("B", "absent", 0)])
    report(1, "worked-example golden fixture", got == want and len(rows) == 4 and elapsed < 1.0,
           f"{len(rows)} rows in {elapsed:.3f}s")


def test_criterion_02_structural_identities():
    failures = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        policy = SamplingPolicy(int(rng.integers(0, 3)), int(rng.integers(0, 3)),
                                int(rng.integers(0, 4)), float(rng.random()),
                                int(rng.integers(1, 3)), seed)
        rows = build_dataset(seed=seed, n_cases=20, n_articles=12, policy=policy).rows
        cats = Counter(r.category for r in rows)
        ok = cats["A"] == cats["B"]
        ok &= all(sum(c.values()) == expected_row_count(c["C"], c["D"], c["A"])
                  for c in realized_draws(rows).values())
        if rows:
            d = compute_diagnostics(rows)
            ok &= d.positive_fraction == cats["C"] / len(rows)
            neg = cats["A"] + cats["B"] + cats["D"]
            ok &= d.wrong_state_fraction == (cats["D"] / neg if neg else None)
        if not ok:
            failures.append(seed)
    report(2, "structural diagnostics identities", not failures,
           f"100 seeded corpora, failures={failures}")


def _instance(rng):
    n = int(rng.integers(2, 51))
    levels = int(rng.integers(2, 12))
    s = rng.integers(0, levels, size=n) / (levels - 1)
    if rng.random() < 0.5:
        s = np.where(rng.random(n) < 0.5, s, rng.random(n))  # mix ties with distinct values
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    return s.tolist(), y.tolist()


def test_criterion_03_metric_oracles():
    t0 = time.perf_counter()
    worst = 0.0
    exact = True
    rng = np.random.default_rng(2024)
    for _ in range(500):
        s, y = _instance(rng)
        worst = max(worst, abs(roc_auc(s, y) - auroc_pairwise(s, y)),
                    abs(pr_auc(s, y) - average_precision_cutpoints(s, y)))
        for tau in (0.5, float(rng.choice(s))):
            c = confusion_at(s, y, tau)
            exact &= (c.tp, c.tn, c.fp, c.fn) == confusion_loop(s, y, tau)
            got = thresholded_metrics(s, y, tau)
            worst = max([worst] + [abs(got[k] - v) for k, v in thresholded_by_hand(s, y, tau).items()])
        sel = select_threshold_youden(s, y)
        tau_o, j_o = youden_scan(s, y)
        exact &= sel.tau_star == tau_o
        worst = max(worst, abs(sel.j_value - j_o))
    elapsed = time.perf_counter() - t0
    report(3, "metric oracle equivalence", exact and worst <= 1e-12 and elapsed < 30,
           f"500 instances, max |d|={worst:.1e}, {elapsed:.1f}s")


def test_criterion_04_metric_anchors():
    y = [1, 0, 1, 0, 1, 0]
    checks = [
        brier([1.0, 0, 1, 0, 1, 0], y) == 0.0,
        brier([0.5] * 6, y) == 0.25,
        roc_auc([0.9, 0.8, 0.7, 0.3, 0.2, 0.1], [1, 1, 1, 0, 0, 0]) == 1.0,
        roc_auc([0.4] * 6, y) == 0.5,
        # TP = FP = FN = 1 (one true negative as well)
        thresholded_metrics([0.9, 0.9, 0.1, 0.1], [1, 0, 1, 0], 0.5)["f1"] == 50.0,
    ]
    report(4, "trivial metric anchors", all(checks), f"{sum(checks)}/5")


def test_criterion_05_intervention_contracts():
    fixed = 0
    for seed in range(50):
        for n in range(2, 1001):
            perm = np.asarray(make_swap_plan(n, seed).permutation)
            fixed += int(np.sum(perm == np.arange(n)))
    ds = build_dataset(seed=11, n_cases=60, n_articles=24)
    rows = ds.rows
    swap = apply_intervention(rows, InterventionSpec("swap", seed=3)).rows
    conserving = Counter(r.evidence_ids for r in swap) == Counter(r.evidence_ids for r in rows)
    nested = True
    for p in (1, 2, 3):
        a = apply_intervention(rows, InterventionSpec("top_p", p=p)).rows
        b = apply_intervention(rows, InterventionSpec("top_p", p=p + 1)).rows
        nested &= all(x.evidence_ids == y.evidence_ids[: len(x.evidence_ids)] for x, y in zip(a, b))
    empty = apply_intervention(rows, InterventionSpec("empty")).rows
    s1_equal = all(
        mask_channels(e, SYSTEMS["S3"], ds.cases, ds.universe).text
        == mask_channels(r, SYSTEMS["S1"], ds.cases, ds.universe).text
        for r, e in zip(rows, empty))
    ev = ds.evidence
    held = apply_intervention(rows, InterventionSpec("heldout", seed=0),
                              heldout_pool_index(ev.assignments, ev.units, ev.split)).rows
    heldout_ids = ev.evidence_ids("heldout")
    pure = bool(held) and all(set(r.evidence_ids) <= heldout_ids for r in held)
    ok = fixed == 0 and conserving and nested and s1_equal and pure
    report(5, "intervention contracts", ok,
           f"fixed points={fixed} over n in [2,1000] x 50 seeds; swap conserving={conserving}; "
           f"prefix nesting={nested}; empty==S1={s1_equal}; held-out purity={pure}")


def test_criterion_06_patient_splits():
    cases = [CaseRecord(f"patient-{i:05d}", f"R{i}", "f", "i") for i in range(10_000)]
    # one extra report per tenth patient, to exercise patient-wise grouping
    cases += [CaseRecord(f"patient-{i:05d}", f"R{i}-b", "f", "i") for i in range(0, 10_000, 10)]
    split = assign_patient_splits(cases, seed=17)
    per_record = {}
    overlap = 0
    for c in cases:
        if per_record.setdefault(c.patient_id, split[c.patient_id]) != split[c.patient_id]:
            overlap += 1
    frac = Counter(split.values())
    fr = [frac[k] / len(split) for k in ("train", "validation", "test")]
    within = all(abs(a - b) <= 0.02 for a, b in zip(fr, (0.75, 0.10, 0.15)))
    extra = cases + [CaseRecord(f"new-{i}", f"N{i}", "f", "i") for i in range(2_000)]
    appended = assign_patient_splits(extra, seed=17)
    stable = all(appended[p] == s for p, s in split.items())
    report(6, "patient-wise splitting", overlap == 0 and within and stable,
           f"fractions={tuple(round(f, 4) for f in fr)}, overlap={overlap}, append-stable={stable}")


@pytest.fixture(scope="module")
def bundled_runs(tmp_path_factory, bundled_corpus_dir):
    root = tmp_path_factory.mktemp("bundled")
    for name in ("cases.jsonl", "articles.jsonl", "config.json"):
        shutil.copy(bundled_corpus_dir / name, root / name)
    cfg = PipelineConfig.load(root / "config.json")
    runs = []
    for tag in ("first", "second"):
        raw = {**cfg.raw, "paths": {**cfg.raw["paths"], "output": str(root / tag)}}
        c = PipelineConfig.from_dict(raw, root)
        t0 = time.perf_counter()
        run_pipeline(c)
        runs.append((root / tag, time.perf_counter() - t0))
    return runs


def _artifacts(out):
    files = ["rows.jsonl", "metrics.json", "comparison.json"]
    files += [str(p.relative_to(out)) for p in sorted((out / "conditions").glob("*.jsonl"))]
    files += [str(p.relative_to(out)) for p in sorted((out / "scores").glob("*.jsonl"))]
    return {f: (out / f).read_bytes() for f in files}


def test_criterion_07_end_to_end_determinism(bundled_runs):
    (a, ta), (b, tb) = bundled_runs
    same = _artifacts(a) == _artifacts(b)
    report(7, "end-to-end determinism", same and max(ta, tb) < 10.0,
           f"{len(_artifacts(a))} artifacts byte-identical={same}; run times {ta:.1f}s, {tb:.1f}s")


def test_criterion_08_directional_sanity(bundled_runs):
    out = bundled_runs[0][0]
    reports = {(r["system"], r["condition"]): r["test"] for r in read_json(out / "metrics.json")["reports"]}
    auroc = {k: reports[("S3", k)]["auroc"] for k in ("none", "swap-0", "empty")}
    gaps = {g["condition"]: g["per_category"]["C"]
            for g in read_json(out / "comparison.json")["intervention_gaps"]}
    ok = auroc["none"] > auroc["swap-0"] and auroc["none"] > auroc["empty"] and gaps["swap-0"] > 0
    report(8, "directional end-to-end sanity", ok,
           f"S3 AUROC none={auroc['none']:.1f} swap={auroc['swap-0']:.1f} empty={auroc['empty']:.1f}; "
           f"mean C-row gap swap={gaps['swap-0']:.3f} empty={gaps['empty']:.3f}")


def test_criterion_09_bootstrap():
    rng = np.random.default_rng(9)
    y = rng.integers(0, 2, 60)
    s = np.clip(0.4 * y + 0.6 * rng.random(60), 0, 1)
    ident = bootstrap_evaluate(s, y, tau=0.5, B=1, resamples=[np.arange(60)])
    point = evaluate_condition(s, y, 0.5)
    identity_ok = all(v.mean == getattr(point, m) for m, v in ident.metrics.items())
    repro = (bootstrap_evaluate(s, y, tau=0.5, B=300, seed=4).to_dict()
             == bootstrap_evaluate(s, y, tau=0.5, B=300, seed=4).to_dict())
    zero = all(np.all(paired_bootstrap_diff(s, s, y, metric=m, B=300, seed=4).differences == 0)
               for m in ("auroc", "auprc", "brier", "accuracy"))
    report(9, "bootstrap correctness", identity_ok and repro and zero,
           f"identity={identity_ok}, reproducible={repro}, self-diff zero={zero}")


def test_criterion_10_decision_policies():
    lo, hi, acc = 0.3, 0.7, 0.5
    grid = sorted({0.0, lo, (0.0 + lo) / 2, (lo + hi) / 2, acc, (acc + hi) / 2, hi, (hi + 1) / 2, 1.0,
                   np.nextafter(lo, 0), np.nextafter(hi, 0), np.nextafter(acc, 0)})
    accept = DecisionPolicy("accept", tau_acc=acc)
    three = DecisionPolicy("three_way", tau_low=lo, tau_high=hi)
    ok = True
    for x in grid:
        ok &= apply_decision_policy(x, accept).action == ("accept" if x >= acc else "reject")
        want = "accept" if x >= hi else "revise" if x >= lo else "escalate"
        ok &= apply_decision_policy(x, three).action == want
    rng = np.random.default_rng(10)
    rerank = DecisionPolicy("rerank")
    invariant = True
    for _ in range(300):
        cand = np.round(rng.random(int(rng.integers(1, 12))), 1)  # rounding forces ties
        base = apply_decision_policy(cand, rerank).selected_index
        invariant &= base == int(np.flatnonzero(cand == cand.max())[0])
        for f in (np.exp, lambda v: 5 * v - 2, np.arctan, lambda v: v ** 3):
            invariant &= apply_decision_policy(f(cand), rerank).selected_index == base
    report(10, "decision policies", ok and invariant,
           f"{len(grid)} grid scores, boundary semantics={ok}, rerank invariance={invariant}")
