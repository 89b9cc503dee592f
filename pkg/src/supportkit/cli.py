"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .pipeline import (ConfigError, Pipeline, PipelineConfig, StageError, default_config_dict,
                       read_json, write_json)
from .supervision import VerifierRow, compute_diagnostics
from .synthetic import generate_synthetic_corpus

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 1, 2

STAGE_COMMANDS = {
    "ingest-cases": "ingest",
    "build-evidence": "evidence",
    "build-supervision": "supervision",
    "apply-interventions": "interventions",
    "score": "scoring",
    "evaluate": "evaluation",
    "compare": "compare",
}


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline config (JSON)")
    p.add_argument("--output", help="override paths.output")
    p.add_argument("--resume", action="store_true", help="skip stages whose outputs are current")
    p.add_argument("--bootstrap-B", type=int, help="override evaluation.B")
    p.add_argument("--token-budget", type=int, help="override token_budget")
    p.add_argument("--scores-file", help="score with an external score file instead of the baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supportkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, stage in STAGE_COMMANDS.items():
        _config_args(sub.add_parser(name, help=f"run the {stage} stage"))
    _config_args(sub.add_parser("run-all", help="run every stage and write the manifest"))

    diag = sub.add_parser("diagnostics", help="structural statistics of a verifier row file")
    src = diag.add_mutually_exclusive_group(required=True)
    src.add_argument("--rows", help="rows.jsonl")
    src.add_argument("--config", help="read rows.jsonl from this config's output directory")

    synth = sub.add_parser("synth", help="write a seeded synthetic corpus and a matching config")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n-cases", type=int, default=200)
    synth.add_argument("--n-articles", type=int, default=60)
    synth.add_argument("--prevalence", type=float, default=0.35)
    synth.add_argument("--direct-mention-rate", type=float, default=0.3)
    synth.add_argument("--negation-rate", type=float, default=0.6)
    synth.add_argument("--no-worked-example", action="store_true")
    return parser


def _load_config(args) -> PipelineConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = read_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if getattr(args, "output", None):
        raw.setdefault("paths", {})["output"] = str(Path(args.output).resolve())
    if getattr(args, "bootstrap_B", None) is not None:
        raw.setdefault("evaluation", {})["B"] = args.bootstrap_B
    if getattr(args, "token_budget", None) is not None:
        raw["token_budget"] = args.token_budget
    if getattr(args, "scores_file", None):
        raw["scorer"] = {"kind": "external_file", "path": str(Path(args.scores_file).resolve())}
    return PipelineConfig.from_dict(raw, path.parent)


def _cmd_synth(args) -> int:
    corpus = generate_synthetic_corpus(
        args.seed, args.n_cases, args.n_articles, prevalence=args.prevalence,
        direct_mention_rate=args.direct_mention_rate, negation_rate=args.negation_rate,
        include_worked_example=not args.no_worked_example,
    )
    paths = corpus.write(args.out)
    config_path = Path(args.out) / "config.json"
    write_json(config_path, default_config_dict(seed=args.seed))
    print(json.dumps({k: str(v) for k, v in {**paths, "config": config_path}.items()}, indent=2))
    return EXIT_OK


def _cmd_diagnostics(args) -> int:
    if args.rows:
        rows_path = Path(args.rows)
    else:
        rows_path = _load_config(args).output_dir / "rows.jsonl"
    if not rows_path.is_file():
        raise ConfigError(f"rows file {rows_path} not found")
    with open(rows_path, encoding="utf-8") as fh:
        rows = [VerifierRow.from_dict(json.loads(line)) for line in fh if line.strip()]
    print(json.dumps(compute_diagnostics(rows).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "diagnostics":
            return _cmd_diagnostics(args)
        pipeline = Pipeline(_load_config(args), resume=args.resume)
        if args.command == "run-all":
            manifest = pipeline.run_all()
            print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
        else:
            checksums = pipeline.run_stage(STAGE_COMMANDS[args.command])
            print(json.dumps(checksums, indent=2, sort_keys=True))
        return EXIT_OK
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
