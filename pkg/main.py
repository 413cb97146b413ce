#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse
import os
import sys
from pathlib import Path

# Project root
PROJECT_ROOT = Path(__file__).parent.resolve()

# Make project modules importable
sys.path.insert(0, str(PROJECT_ROOT))

# Logs and the HTTP cache live under DATA_DIR
os.environ.setdefault("DATA_DIR", str(PROJECT_ROOT / "data"))

from aggregation.aie import AggregationError
from aggregation.binning import BinningError
from audit.audit import AuditInputError
from commands.aggregate import cmd_aggregate
from commands.audit import cmd_audit
from commands.build_dataset import cmd_build_dataset
from commands.gen_weights import cmd_gen_weights
from commands.importers import cmd_import_corpus, cmd_import_facts
from commands.trace import cmd_trace
from core.config_loader import ConfigError, load_config
from core.config_schema import SCENARIOS
from diagnostics.bias_probes import ModelFailureError
from diagnostics.relations import InsufficientTemplatesError, UnknownRelationError
from engine.tokenizer import TokenizationError
from engine.transformer import InterventionError, NonFiniteActivationError, SequenceTooLongError
from engine.weights import WeightsFormatError
from scenarios.builders import CorpusExhaustedError, DisjointnessError, SplitTooSmallError
from scenarios.dataset_io import MissingInputError
from scenarios.synthetic_names import NameGenerationError
from tracing.causal_trace import DegenerateTargetError
from tracing.grid_io import GridFormatError
from utils.http_cache import HttpLookupError

# Everything a command can raise on bad input; anything else is a bug and keeps its traceback
KNOWN_ERRORS = (
    ConfigError, MissingInputError, WeightsFormatError, TokenizationError,
    SequenceTooLongError, NonFiniteActivationError, InterventionError, DegenerateTargetError,
    BinningError, AggregationError, GridFormatError, UnknownRelationError,
    InsufficientTemplatesError, ModelFailureError, CorpusExhaustedError, NameGenerationError,
    SplitTooSmallError, DisjointnessError, AuditInputError, HttpLookupError, ValueError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recall-scenarios",
        description="Build recall-scenario datasets, trace fact recall and audit probing datasets.",
    )
    parser.add_argument("--config", type=Path, default=None, help="JSON run config (default: config/default_config.json)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, dotted keys reach nested sections")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="build scenario splits and the mixed dataset")
    p.add_argument("--scenario", action="append", choices=SCENARIOS, default=None,
                   help="scenario to build (repeatable, default: all)")
    p.add_argument("--facts", type=Path, default=None, help="fact tuple TSV (relation, subject, object)")
    p.add_argument("--corpus", type=Path, default=None, help="JSONL corpus for the generic scenario")

    p = sub.add_parser("trace", help="causal tracing over every dataset row")
    p.add_argument("--dataset", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("aggregate", help="average indirect effect per token bin and layer")
    p.add_argument("--trace-dir", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--scenario", choices=SCENARIOS, default=None, help="only rows of this scenario")

    p = sub.add_parser("audit", help="bias, total-effect and negation audit of a probing dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--format", dest="input_format", choices=["dataset", "counterfact"], default="dataset")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--extracts", action="store_true", help="also write one CSV per flag")

    p = sub.add_parser("import-facts", help="LAMA/T-REx JSONL to the fact TSV")
    p.add_argument("source", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("import-corpus", help="titled plain-text dump to the JSONL corpus")
    p.add_argument("source", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gen-weights", help="write a seeded toy model")
    p.add_argument("--kind", choices=["random", "planted"], default="planted")
    p.add_argument("--out", type=Path, default=Path("out/toy"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--facts", dest="n_facts", type=int, default=50, help="planted facts (planted kind only)")
    return parser


def run(args: argparse.Namespace) -> None:
    if args.command == "gen-weights":
        written = cmd_gen_weights(args.kind, args.out, seed=args.seed, n_facts=args.n_facts)
        for name, path in written.items():
            print(f"{name}: {path}")
        return
    if args.command == "import-facts":
        summary = cmd_import_facts(args.source, args.out)
        print(f"{summary['facts']} facts over {summary['relations']} relations -> {args.out}")
        return
    if args.command == "import-corpus":
        summary = cmd_import_corpus(args.source, args.out)
        print(f"{summary['articles']} articles, {summary['sentences']} sentences -> {args.out}")
        return

    config = load_config(args.config, args.overrides)
    if args.command == "build-dataset":
        log = cmd_build_dataset(config, args.scenario or list(SCENARIOS), args.facts, args.corpus)
        for scenario, stats in log["scenarios"].items():
            print(f"{scenario}: {stats['samples']} samples, rejections {stats['rejections']}")
        print(f"dataset: {log['dataset_rows']} rows -> {config.outputs.dataset_path}")
    elif args.command == "trace":
        manifest = cmd_trace(config, args.dataset or config.outputs.dataset_path, args.out)
        print(f"traced {len(manifest['rows'])} rows, skipped {len(manifest['skipped'])}, "
              f"zero total effect {len(manifest['zero_te'])}")
    elif args.command == "aggregate":
        report = cmd_aggregate(config, args.trace_dir, args.out, args.scenario)
        print(f"aggregated {report['n_samples']} samples")
        for component, peaks in report["peaks"].items():
            for peak in peaks:
                print(f"peak {component}: {peak['bin']} layer {peak['layer']} aie {peak['aie']:.4f}")
    elif args.command == "audit":
        body = cmd_audit(config, args.dataset, args.input_format, args.out, args.extracts)
        print(f"audited {body['n_rows']} rows: bias {body['bias_counts']}, "
              f"negative TE {len(body['negative_te_samples'])}, low TE {len(body['low_te_samples'])}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except KNOWN_ERRORS as e:
        print(f"[ERROR] {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
