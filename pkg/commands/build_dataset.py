# commands/build_dataset.py

from pathlib import Path
from typing import Dict, List, Optional, Sequence

from commands.common import entity_checker, load_runner, new_run_id, popularity_provider, require_file
from core.config_schema import SCENARIOS, RunConfig
from diagnostics.bias_probes import BiasProbe
from diagnostics.relations import SubstitutionTable, TemplateStore
from scenarios.builders import (
    BuildResult,
    answer_sets,
    assemble_dataset,
    build_exact_fact,
    build_generic,
    build_guesswork,
    build_heuristics,
)
from scenarios.dataset_io import DATASET_FORMAT, DATASET_VERSION, load_corpus, load_fact_tuples, write_dataset
from scenarios.synthetic_names import generate_synthetic_subjects, style_distribution
from utils.persistence import write_json, write_jsonl
from utils.structured_logger import log_event


def cmd_build_dataset(config: RunConfig, scenarios: Sequence[str], facts_path: Optional[Path] = None,
                      corpus_path: Optional[Path] = None) -> Dict:
    """
    Builds the selected scenario splits, writes each split in full, the
    heuristics side channel, the mixed dataset and a build log with
    rejection counts per stage.
    """
    run_id = new_run_id("build-dataset")
    unknown = [s for s in scenarios if s not in SCENARIOS]
    if unknown:
        raise ValueError(f"unknown scenarios: {unknown}")

    needs_facts = any(s in scenarios for s in ("guesswork", "exact_fact", "heuristics"))
    facts = load_fact_tuples(require_file(facts_path, "fact tuple file")) if needs_facts else []
    answers = answer_sets(facts)
    runner = load_runner(config)
    store = TemplateStore.load(relations=config.relations)
    probe = BiasProbe(runner, SubstitutionTable.load(), config.topk_bias, config.lexical_min_fragment)
    log_event(run_id, "start", input_data={"scenarios": list(scenarios), "facts": len(facts)},
              extra={"config": config.echo()})

    results: Dict[str, BuildResult] = {}
    styles: Dict[str, Dict[str, int]] = {}
    if "guesswork" in scenarios:
        results["guesswork"] = build_guesswork(facts, store, runner, popularity_provider(config), config, answers)
    if "exact_fact" in scenarios:
        results["exact_fact"] = build_exact_fact(facts, store, runner, popularity_provider(config), probe,
                                                 config, answers)
    if "heuristics" in scenarios:
        checker = entity_checker(config, run_id)
        subjects = []
        for i, relation_id in enumerate(config.relations):
            batch = generate_synthetic_subjects(
                config.synthetic.styles[relation_id], config.synthetic.subjects_per_relation, checker,
                seed=config.seed + i, max_attempts=config.synthetic.max_attempts,
            )
            styles[relation_id] = style_distribution(batch)
            subjects += [(relation_id, s) for s in batch]
        results["heuristics"] = build_heuristics(subjects, store, runner, probe, config, answers)
    if "generic" in scenarios:
        corpus = load_corpus(require_file(corpus_path, "corpus file"))
        n = config.mixture.get("generic") or config.generic_samples
        results["generic"] = build_generic(corpus, n, runner, config.seed)

    out = config.outputs
    splits_dir = out.output_dir / "splits"
    for scenario, result in results.items():
        write_jsonl(splits_dir / f"{scenario}.jsonl", [s.to_record() for s in result.samples])
    if "heuristics" in results:
        write_jsonl(splits_dir / "heuristics_side_channel.jsonl",
                    [s.to_record() for s in results["heuristics"].side_channel])

    mixture = {s: c for s, c in config.mixture.items() if s in scenarios}
    chosen = assemble_dataset({s: r.samples for s, r in results.items()}, mixture, config.seed)
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "seed": config.seed,
              "mixture": dict(sorted(mixture.items())), "config": config.echo()}
    write_dataset(out.dataset_path, header, [s.to_record() for s in chosen])

    build_log = {
        "config": config.echo(),
        "scenarios": {
            s: {"samples": len(r.samples), "side_channel": len(r.side_channel),
                "rejections": dict(sorted(r.rejections.items()))}
            for s, r in sorted(results.items())
        },
        "synthetic_styles": styles,
        "mixture": dict(sorted(mixture.items())),
        "dataset_rows": len(chosen),
    }
    write_json(out.build_log_path, build_log)
    log_event(run_id, "done", output_data={"dataset": str(out.dataset_path), "rows": len(chosen)})
    return build_log
