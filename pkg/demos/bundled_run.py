"""Run the full pipeline on the bundled synthetic corpus and summarise it.

Run: python demos/bundled_run.py [output_dir]
"""

import shutil
import sys
import tempfile
from pathlib import Path

from supportkit.pipeline import PipelineConfig, read_json, run_pipeline
from supportkit.synthetic import bundled_path

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="supportkit-"))
work.mkdir(parents=True, exist_ok=True)
for name in ("cases.jsonl", "articles.jsonl", "config.json"):
    shutil.copy(bundled_path("synthetic_200", name), work / name)

cfg = PipelineConfig.load(work / "config.json")
run_pipeline(cfg)
out = cfg.output_dir
print(f"artifacts in {out}")

diag = read_json(out / "supervision_diagnostics.json")
print("category counts:", diag["category_counts"], f"positive fraction {diag['positive_fraction']:.3f}")

print(f"\n{'system':<7}{'condition':<11}{'AUROC':>7}{'AUPRC':>7}{'Brier':>7}   95% CI AUROC")
for r in read_json(out / "metrics.json")["reports"]:
    t = r["test"]
    if t is None:
        continue
    ci = r["bootstrap"]["metrics"]["auroc"]
    band = f"[{ci['ci_lo']:.1f}, {ci['ci_hi']:.1f}]" if ci["mean"] is not None else "n/a"
    print(f"{r['system']:<7}{r['condition']:<11}{t['auroc']:>7.1f}{t['auprc']:>7.1f}{t['brier']:>7.3f}   {band}")

print("\nmean S3 score drop against the unmodified condition, by row category:")
for g in read_json(out / "comparison.json")["intervention_gaps"]:
    cells = "  ".join(f"{k}={v:+.3f}" for k, v in sorted(g["per_category"].items()))
    print(f"  {g['condition']:<10} {cells}")
