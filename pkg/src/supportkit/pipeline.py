"""Config-driven, resumable pipeline: ingest -> evidence -> supervision ->
interventions -> scoring -> evaluation -> compare.

Every stage reads its inputs from the run directory and writes line-delimited
JSON (sorted keys, compact separators) so that identical configs and inputs
give byte-identical artifacts. The run manifest is written last.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from . import __version__
from .corpus import DEFAULT_RATIOS, CaseConceptInstance, CaseRecord, ingest_cases
from .evaluation import (METRICS, bootstrap_evaluate, evaluate_condition, intervention_gap,
                         paired_bootstrap_diff, select_threshold_youden)
from .evidence import EvidenceSplit, EvidenceUnit, PoolAssignment, build_evidence, index_pools
from .interventions import (DEFAULT_DELIMITER, InterventionSpec, apply_intervention,
                            heldout_pool_index, materialize_evidence)
from .registry import ConceptRegistry
from .scoring import SYSTEMS, ScorerSpec, mask_channels, score_formatted, score_rows
from .supervision import SamplingPolicy, VerifierRow, compute_diagnostics, construct_supervision
from .synthetic import default_registry
from .text import length_summary, tokenize

log = logging.getLogger(__name__)

STAGES = ("ingest", "evidence", "supervision", "interventions", "scoring", "evaluation", "compare")


class ConfigError(ValueError):
    """Invalid or incomplete pipeline configuration (exit code 1)."""


class StageError(RuntimeError):
    """A stage failed; carries the stage name and the offending record id (exit code 2)."""

    def __init__(self, stage: str, message: str, record_id: str | None = None):
        self.stage = stage
        self.record_id = record_id
        where = f" at record {record_id}" if record_id else ""
        super().__init__(f"stage {stage!r} failed{where}: {message}")


# -- canonical IO -------------------------------------------------------------

def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_jsonl(path: Path, records: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(canonical_json(rec) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def read_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- configuration --------------------------------------------------------------

def _require(d: Mapping, key: str, where: str):
    if key not in d:
        raise ConfigError(f"config is missing {where}.{key}")
    return d[key]


@dataclass
class PipelineConfig:
    cases_path: Path
    articles_path: Path
    output_dir: Path
    case_seed: int
    evidence_seed: int
    sampling: SamplingPolicy
    bootstrap_seed: int
    registry_path: Path | None = None
    case_ratios: tuple[float, float, float] = DEFAULT_RATIOS
    evidence_ratio: float = 0.80
    n_easy: int = 60
    interventions: tuple[str, ...] = ("none", "empty", "swap-0", "heldout-0", "top1")
    scorer: ScorerSpec = field(default_factory=ScorerSpec)
    systems: tuple[str, ...] = ("S1", "S2", "S3")
    bootstrap_B: int = 1000
    metrics: tuple[str, ...] = METRICS
    compare_metrics: tuple[str, ...] = ("auroc", "auprc")
    token_budget: int = 512
    delimiter: str = DEFAULT_DELIMITER
    write_csv: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: str | Path = ".") -> "PipelineConfig":
        base = Path(base_dir)

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        try:
            paths = _require(d, "paths", "")
            case_split = _require(d, "case_split", "")
            ev = _require(d, "evidence", "")
            sampling = dict(_require(d, "sampling", ""))
            _require(sampling, "seed", "sampling")
            ev_cfg = d.get("evaluation", {})
            scorer_cfg = dict(d.get("scorer", {"kind": "baseline_lexical"}))
            if scorer_cfg.get("path"):
                scorer_cfg["path"] = str(resolve(scorer_cfg["path"]))
            keys = tuple(d.get("interventions", cls.interventions))
            for key in keys:
                InterventionSpec.from_key(key)
            if "none" not in keys:
                keys = ("none",) + keys
            systems = tuple(ev_cfg.get("systems", cls.systems))
            unknown = set(systems) - set(SYSTEMS)
            if unknown or "S3" not in systems:
                raise ConfigError(f"systems must include S3 and be among {sorted(SYSTEMS)}")
            cfg = cls(
                cases_path=resolve(_require(paths, "cases", "paths")),
                articles_path=resolve(_require(paths, "articles", "paths")),
                output_dir=resolve(_require(paths, "output", "paths")),
                registry_path=resolve(d["registry"]) if d.get("registry") else None,
                case_seed=int(_require(case_split, "seed", "case_split")),
                case_ratios=tuple(case_split.get("ratios", DEFAULT_RATIOS)),
                evidence_seed=int(_require(ev, "seed", "evidence")),
                evidence_ratio=float(ev.get("ratio", 0.80)),
                n_easy=int(ev.get("n_easy", 60)),
                sampling=SamplingPolicy(**sampling),
                interventions=keys,
                scorer=ScorerSpec(**scorer_cfg),
                systems=systems,
                bootstrap_B=int(ev_cfg.get("B", 1000)),
                bootstrap_seed=int(_require(ev_cfg, "seed", "evaluation")),
                metrics=tuple(ev_cfg.get("metrics", METRICS)),
                compare_metrics=tuple(ev_cfg.get("compare_metrics", ("auroc", "auprc"))),
                token_budget=int(d.get("token_budget", 512)),
                delimiter=str(d.get("delimiter", DEFAULT_DELIMITER)),
                write_csv=bool(d.get("write_csv", True)),
                raw=dict(d),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if cfg.token_budget < 1:
            raise ConfigError("token_budget must be >= 1")
        if cfg.bootstrap_B < 1:
            raise ConfigError("evaluation.B must be >= 1")
        if not set(cfg.metrics) <= set(METRICS) or not set(cfg.compare_metrics) <= set(METRICS):
            raise ConfigError(f"metrics must be among {METRICS}")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            data = read_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, path.parent)

    def preflight(self) -> None:
        """Fail before anything is written when inputs are unreadable."""
        for name, p in (("cases", self.cases_path), ("articles", self.articles_path)):
            if not p.is_file():
                raise ConfigError(f"{name} path {p} does not exist")
        if self.registry_path is not None and not self.registry_path.is_file():
            raise ConfigError(f"registry path {self.registry_path} does not exist")

    def digest(self) -> str:
        """Hash of the protocol; where the outputs land is not part of it."""
        raw = dict(self.raw)
        raw["paths"] = {k: v for k, v in raw.get("paths", {}).items() if k != "output"}
        return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()

    def registry(self) -> ConceptRegistry:
        return ConceptRegistry.load(self.registry_path) if self.registry_path else default_registry()


# -- manifest ------------------------------------------------------------------

@dataclass
class RunManifest:
    config_digest: str
    version: str
    started_at: str
    finished_at: str | None = None
    stages: dict[str, dict[str, str]] = field(default_factory=dict)
    skipped_stages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- pipeline -----------------------------------------------------------------------

STAGE_OUTPUTS = {
    "ingest": ("cases.jsonl", "instances.jsonl", "easy_control.jsonl", "rejections.jsonl",
               "ingest_summary.json"),
    "evidence": ("evidence_units.jsonl", "pool_assignments.jsonl", "evidence_split.json",
                 "evidence_summary.json"),
    "supervision": ("rows.jsonl", "supervision_diagnostics.json"),
    "interventions": ("conditions_manifest.json",),
    "scoring": ("scoring_summary.json",),
    "evaluation": ("metrics.json",),
    "compare": ("comparison.json",),
}


def score_plan(systems: Iterable[str], condition_keys: Iterable[str]) -> list[tuple[str, str]]:
    """Every system on correct evidence, plus S3 on every other condition."""
    plan = [(s, "none") for s in sorted(systems)]
    plan += [("S3", k) for k in condition_keys if k != "none"]
    return plan


def score_key(system: str, condition: str) -> str:
    return f"{system}:{condition}"


class Pipeline:
    def __init__(self, config: PipelineConfig, *, resume: bool = False):
        self.config = config
        self.resume = resume
        self.out = config.output_dir
        self._registry: ConceptRegistry | None = None
        self.manifest = RunManifest(config.digest(), __version__, _now())

    @property
    def registry(self) -> ConceptRegistry:
        if self._registry is None:
            self._registry = self.config.registry()
        return self._registry

    # stage bookkeeping
    def _stamp_path(self, stage: str) -> Path:
        return self.out / ".stamps" / f"{stage}.json"

    def _outputs(self, stage: str) -> list[Path]:
        files = [self.out / name for name in STAGE_OUTPUTS[stage]]
        if stage in ("interventions", "scoring"):
            sub = self.out / ("conditions" if stage == "interventions" else "scores")
            files += sorted(sub.glob("*.jsonl")) if sub.is_dir() else []
        if stage == "evaluation" and (self.out / "metrics.csv").exists():
            files.append(self.out / "metrics.csv")
        return files

    def _checksums(self, stage: str) -> dict[str, str]:
        return {str(p.relative_to(self.out)): sha256_file(p) for p in self._outputs(stage)}

    def _is_current(self, stage: str) -> bool:
        stamp = self._stamp_path(stage)
        if not stamp.is_file():
            return False
        recorded = read_json(stamp)
        if recorded.get("config_digest") != self.manifest.config_digest:
            return False
        files = recorded.get("checksums", {})
        return bool(files) and all(
            (self.out / name).is_file() and sha256_file(self.out / name) == digest
            for name, digest in files.items()
        )

    def run_stage(self, stage: str) -> dict[str, str]:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        if self.resume and self._is_current(stage):
            log.info("stage %s is current; skipping", stage)
            self.manifest.skipped_stages.append(stage)
            checksums = read_json(self._stamp_path(stage))["checksums"]
        else:
            self.config.preflight()
            self.out.mkdir(parents=True, exist_ok=True)
            fn: Callable[[], None] = getattr(self, f"stage_{stage}")
            try:
                fn()
            except StageError:
                raise
            except FileNotFoundError as exc:
                raise StageError(stage, f"missing upstream artifact {exc.filename}") from exc
            except Exception as exc:  # noqa: BLE001 - wrapped with the stage name
                raise StageError(stage, f"{type(exc).__name__}: {exc}",
                                 getattr(exc, "record_id", None)) from exc
            checksums = self._checksums(stage)
            self._stamp_path(stage).parent.mkdir(exist_ok=True)
            write_json(self._stamp_path(stage),
                       {"config_digest": self.manifest.config_digest, "checksums": checksums})
        self.manifest.stages[stage] = checksums
        return checksums

    def run_all(self) -> RunManifest:
        self.config.preflight()
        for stage in STAGES:
            log.info("running stage %s", stage)
            self.run_stage(stage)
        self.manifest.finished_at = _now()
        write_json(self.out / "manifest.json", self.manifest.to_dict())
        return self.manifest

    # loaders
    def load_cases(self) -> dict[str, CaseRecord]:
        return {d["report_id"]: CaseRecord.from_dict(d) for d in read_jsonl(self.out / "cases.jsonl")}

    def load_instances(self) -> list[CaseConceptInstance]:
        return [CaseConceptInstance.from_dict(d) for d in read_jsonl(self.out / "instances.jsonl")]

    def load_units(self) -> list[EvidenceUnit]:
        return [EvidenceUnit.from_dict(d) for d in read_jsonl(self.out / "evidence_units.jsonl")]

    def load_assignments(self) -> list[PoolAssignment]:
        return [PoolAssignment.from_dict(d) for d in read_jsonl(self.out / "pool_assignments.jsonl")]

    def load_split(self) -> EvidenceSplit:
        d = read_json(self.out / "evidence_split.json")
        return EvidenceSplit(frozenset(d["trainval"]), frozenset(d["heldout"]))

    def load_rows(self, path: Path | None = None) -> list[VerifierRow]:
        return [VerifierRow.from_dict(d) for d in read_jsonl(path or self.out / "rows.jsonl")]

    def load_condition(self, key: str) -> list[VerifierRow]:
        return self.load_rows(self.out / "conditions" / f"{key}.jsonl")

    def load_scores(self, system: str, condition: str) -> dict[str, float]:
        path = self.out / "scores" / f"{system}__{condition}.jsonl"
        return {d["row_id"]: d["probability"] for d in read_jsonl(path)}

    # stages
    def stage_ingest(self) -> None:
        records = []
        with open(self.config.cases_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    rec = {}
                    log.warning("cases line %d is not valid JSON; rejected", lineno)
                records.append(rec if isinstance(rec, dict) else {})
        result = ingest_cases(records, self.registry, self.config.case_seed, self.config.case_ratios)
        write_jsonl(self.out / "cases.jsonl", (c.to_dict() for c in result.cases))
        write_jsonl(self.out / "instances.jsonl", (i.to_dict() for i in result.benchmark))
        write_jsonl(self.out / "easy_control.jsonl", (i.to_dict() for i in result.easy_control))
        write_jsonl(self.out / "rejections.jsonl", result.rejections)
        summary = result.counts()
        summary["split_sizes"] = {
            s: sum(1 for c in result.cases if c.split == s) for s in ("train", "validation", "test")
        }
        summary["case_token_lengths"] = length_summary(len(tokenize(c.findings_text)) for c in result.cases)
        write_json(self.out / "ingest_summary.json", summary)

    def stage_evidence(self) -> None:
        articles = read_jsonl(self.config.articles_path)
        for n, a in enumerate(articles, start=1):
            if "article_id" not in a:
                raise StageError("evidence", "article without article_id", f"line {n}")
        build = build_evidence(articles, self.registry, seed=self.config.evidence_seed,
                               n_easy=self.config.n_easy, ratio=self.config.evidence_ratio)
        write_jsonl(self.out / "evidence_units.jsonl", (u.to_dict() for u in build.units))
        write_jsonl(self.out / "pool_assignments.jsonl", (a.to_dict() for a in build.assignments))
        write_json(self.out / "evidence_split.json", {
            "trainval": sorted(build.split.trainval_article_ids),
            "heldout": sorted(build.split.heldout_article_ids),
        })
        stats = build.stats(self.registry)
        stats["dropped"] = build.dropped
        stats["duplicate_articles"] = build.duplicate_articles
        write_json(self.out / "evidence_summary.json", stats)

    def stage_supervision(self) -> None:
        units = self.load_units()
        split = self.load_split()
        trainval = {u.evidence_id for u in units if u.article_id in split.trainval_article_ids}
        pools = index_pools(self.load_assignments(), trainval)
        rows = construct_supervision(self.load_instances(), pools, self.config.sampling, self.registry)
        if not rows:
            raise StageError("supervision", "no verifier rows were constructed")
        write_jsonl(self.out / "rows.jsonl", (r.to_dict() for r in rows))
        write_json(self.out / "supervision_diagnostics.json", compute_diagnostics(rows).to_dict())

    def stage_interventions(self) -> None:
        rows = self.load_rows()
        pools = heldout_pool_index(self.load_assignments(), self.load_units(), self.load_split())
        cond_dir = self.out / "conditions"
        cond_dir.mkdir(exist_ok=True)
        manifests = []
        for key in self.config.interventions:
            result = apply_intervention(rows, InterventionSpec.from_key(key), pools)
            write_jsonl(cond_dir / f"{key}.jsonl", (r.to_dict() for r in result.rows))
            manifests.append(result.manifest())
        write_json(self.out / "conditions_manifest.json", {"conditions": manifests})

    def stage_scoring(self) -> None:
        cfg = self.config
        cases = self.load_cases()
        universe = {u.evidence_id: u for u in self.load_units()}
        score_dir = self.out / "scores"
        score_dir.mkdir(exist_ok=True)
        summary: dict[str, Any] = {"plan": [], "truncation": {}}
        for system, key in score_plan(cfg.systems, cfg.interventions):
            rows = self.load_condition(key)
            mask = SYSTEMS[system]
            formatted = []
            for r in rows:
                try:
                    formatted.append(mask_channels(r, mask, cases, universe,
                                                   delimiter=cfg.delimiter, budget=cfg.token_budget))
                except KeyError as exc:
                    raise StageError("scoring", str(exc), r.row_id) from None
            ckey = score_key(system, key)
            if cfg.scorer.kind == "baseline_lexical":
                records = score_formatted(rows, formatted, cfg.scorer, ckey, self.registry,
                                          delimiter=cfg.delimiter)
            else:
                records = score_rows(rows, cfg.scorer, mask, ckey)
            write_jsonl(score_dir / f"{system}__{key}.jsonl", (rec.to_dict() for rec in records))
            summary["plan"].append(score_key(system, key))
            summary["truncation"][score_key(system, key)] = {
                "n": len(formatted),
                "truncated_fraction": (sum(f.truncated for f in formatted) / len(formatted)
                                       if formatted else 0.0),
                "input_token_lengths": length_summary(f.token_len for f in formatted),
            }
        rows = self.load_rows()
        summary["evidence_token_lengths"] = length_summary(
            len(tokenize(materialize_evidence(r.evidence_ids, universe, cfg.delimiter))) for r in rows
        )
        write_json(self.out / "scoring_summary.json", summary)

    def _scored(self, system: str, key: str):
        rows = self.load_condition(key)
        scores = self.load_scores(system, key)
        return rows, scores

    def stage_evaluation(self) -> None:
        cfg = self.config
        reports = []
        for system, key in score_plan(cfg.systems, cfg.interventions):
            rows, scores = self._scored(system, key)
            by_split = defaultdict(list)
            for r in rows:
                by_split[r.split].append(r)
            val, test = by_split.get("validation", []), by_split.get("test", [])
            ckey = score_key(system, key)
            entry: dict[str, Any] = {"system": system, "condition": key}
            try:
                sel = select_threshold_youden([scores[r.row_id] for r in val],
                                              [r.label for r in val], ckey)
                entry["threshold"] = sel.to_dict()
            except ValueError as exc:
                log.warning("%s: %s; falling back to tau=0.5", ckey, exc)
                entry["threshold"] = {"condition_key": ckey, "tau_star": 0.5, "j_value": None,
                                      "fallback": str(exc)}
            tau = entry["threshold"]["tau_star"]
            for split_name, subset in (("validation", val), ("test", test)):
                if len({r.label for r in subset}) < 2:
                    entry[split_name] = None
                    continue
                s = [scores[r.row_id] for r in subset]
                y = [r.label for r in subset]
                entry[split_name] = evaluate_condition(s, y, tau, ckey).to_dict()
            if test and len(test) >= 2:
                boot = bootstrap_evaluate([scores[r.row_id] for r in test], [r.label for r in test],
                                          tau=tau, B=cfg.bootstrap_B, seed=cfg.bootstrap_seed,
                                          metrics=cfg.metrics)
                entry["bootstrap"] = boot.to_dict()
            reports.append(entry)
        write_json(self.out / "metrics.json", {"B": cfg.bootstrap_B, "seed": cfg.bootstrap_seed,
                                               "reports": reports})
        if cfg.write_csv:
            self._write_metrics_csv(reports)

    def _write_metrics_csv(self, reports: list[dict]) -> None:
        fields = ["system", "condition", "split", "n", "tau"] + list(METRICS)
        with open(self.out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fields)
            for e in reports:
                for split_name in ("validation", "test"):
                    rep = e.get(split_name)
                    if rep is None:
                        continue
                    writer.writerow([e["system"], e["condition"], split_name, rep["n"],
                                     repr(rep["tau"])] + [
                        "" if rep[m] is None else repr(rep[m]) for m in METRICS])

    def stage_compare(self) -> None:
        cfg = self.config
        metrics = read_json(self.out / "metrics.json")
        taus = {(e["system"], e["condition"]): e["threshold"]["tau_star"] for e in metrics["reports"]}
        base_rows, base_scores = self._scored("S3", "none")
        base_test = [r for r in base_rows if r.split == "test"]
        comparisons, gaps = [], []
        for system, key in score_plan(cfg.systems, cfg.interventions):
            if (system, key) == ("S3", "none"):
                continue
            rows, scores = self._scored(system, key)
            present = {r.row_id for r in rows}
            common = [r for r in base_test if r.row_id in present]
            entry: dict[str, Any] = {"reference": "S3:none", "compared": score_key(system, key),
                                     "n_common_test_rows": len(common), "paired": {}}
            if len({r.label for r in common}) == 2:
                ids = [r.row_id for r in common]
                labels = [r.label for r in common]
                for m in cfg.compare_metrics:
                    diff = paired_bootstrap_diff(
                        [base_scores[i] for i in ids], [scores[i] for i in ids], labels,
                        metric=m, B=cfg.bootstrap_B, seed=cfg.bootstrap_seed,
                        tau_m=taus[("S3", "none")], tau_m2=taus[(system, key)],
                    )
                    entry["paired"][m] = diff.to_dict()
            comparisons.append(entry)
            if system == "S3" and common:
                gap = intervention_gap([base_scores[r.row_id] for r in common],
                                       [scores[r.row_id] for r in common],
                                       [r.row_id for r in common], [r.category for r in common])
                gaps.append({"condition": key, "n": len(common), "mean": gap.mean,
                             "per_category": gap.per_category})
        write_json(self.out / "comparison.json", {"comparisons": comparisons,
                                                  "intervention_gaps": gaps})


def run_pipeline(config: PipelineConfig, *, resume: bool = False) -> RunManifest:
    return Pipeline(config, resume=resume).run_all()


def default_config_dict(cases: str = "cases.jsonl", articles: str = "articles.jsonl",
                        output: str = "run", seed: int = 0) -> dict:
    """A complete config with every seed spelled out."""
    return {
        "paths": {"cases": cases, "articles": articles, "output": output},
        "registry": None,
        "case_split": {"seed": seed, "ratios": list(DEFAULT_RATIOS)},
        "evidence": {"seed": seed, "ratio": 0.8, "n_easy": 60},
        "sampling": asdict(SamplingPolicy(seed=seed)),
        "interventions": ["none", "empty", f"swap-{seed}", f"heldout-{seed}", "top1"],
        "scorer": {"kind": "baseline_lexical", "overlap_weight": 0.5, "polarity_weight": 0.6,
                   "case_weight": 0.3},
        "evaluation": {"B": 1000, "seed": seed, "systems": ["S1", "S2", "S3"],
                       "metrics": list(METRICS), "compare_metrics": ["auroc", "auprc"]},
        "token_budget": 512,
        "delimiter": DEFAULT_DELIMITER,
        "write_csv": True,
    }
