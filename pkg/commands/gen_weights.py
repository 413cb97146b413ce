# commands/gen_weights.py

from pathlib import Path
from typing import Dict, List

from commands.common import new_run_id
from diagnostics.criteria import lexical_overlap
from diagnostics.relations import SubstitutionTable, TemplateStore
from engine.runner import TransformerRunner
from engine.tokenizer import save_vocab
from engine.toy_models import build_planted_model, build_random_model
from engine.weights import save_weights
from scenarios.builders import ScenarioSample
from scenarios.dataset_io import DATASET_FORMAT, DATASET_VERSION, FactTuple, write_dataset, write_fact_tuples
from scenarios.synthetic_names import NameGenerator
from utils.persistence import atomic_write_text
from utils.structured_logger import log_event

PLANTED_RELATION = "P495"
PLANTED_TEMPLATE_ID = 0
PLANTED_VIEWS = 5000
PLANTED_OBJECTS = ["Japan", "France", "Germany", "Italy", "Spain", "Canada", "Brazil", "India", "Egypt", "Norway"]


def plant_facts(seed: int = 0, n_facts: int = 50) -> Dict[str, str]:
    """Single-word synthetic subjects mapped round-robin onto the planted objects."""
    generator = NameGenerator(seed)
    facts: Dict[str, str] = {}
    while len(facts) < n_facts:
        name = generator.name("work", single_word=True).name
        if any(lexical_overlap(name, obj) for obj in PLANTED_OBJECTS):
            continue
        facts[name] = PLANTED_OBJECTS[len(facts) % len(PLANTED_OBJECTS)]
    return facts


def planted_context_words(store: TemplateStore, substitutions: SubstitutionTable) -> List[str]:
    words = list(store.words(PLANTED_RELATION))
    for text in substitutions.name_probes + [s for subs in substitutions.by_relation.values() for s in subs]:
        for w in text.replace("[X]", " ").split():
            for piece in ([w[:-1], w[-1]] if w.endswith(":") else [w]):
                if piece and piece not in words:
                    words.append(piece)
    return words


def cmd_gen_weights(kind: str, out_dir: Path, seed: int = 0, n_facts: int = 50) -> Dict[str, str]:
    """
    Writes a seeded toy model. The planted kind also writes its vocabulary,
    fact TSV, popularity TSV and a ready-to-trace dataset (one query per fact).
    """
    run_id = new_run_id("gen-weights")
    out_dir = Path(out_dir)
    written: Dict[str, str] = {}

    if kind == "random":
        bundle = build_random_model(seed=seed)
        path = out_dir / "random.weights"
        save_weights(path, bundle.config, bundle.tensors)
        written["weights"] = str(path)
        log_event(run_id, "gen_weights", input_data={"kind": kind, "seed": seed}, output_data=written)
        return written
    if kind != "planted":
        raise ValueError(f"unknown weights kind '{kind}'")

    store = TemplateStore.load(relations=[PLANTED_RELATION])
    substitutions = SubstitutionTable.load()
    facts = plant_facts(seed, n_facts)
    model = build_planted_model(facts, planted_context_words(store, substitutions), seed=seed)

    paths = {
        "weights": out_dir / "planted.weights",
        "vocab": out_dir / "planted.vocab.json",
        "facts": out_dir / "planted.facts.tsv",
        "popularity": out_dir / "planted.popularity.tsv",
        "dataset": out_dir / "planted.dataset.jsonl",
    }
    save_weights(paths["weights"], model.weights.config, model.weights.tensors)
    save_vocab(paths["vocab"], model.tokenizer)
    write_fact_tuples(paths["facts"], [FactTuple(PLANTED_RELATION, s, o) for s, o in facts.items()])
    atomic_write_text(paths["popularity"],
                      "subject\tviews\n" + "".join(f"{s}\t{PLANTED_VIEWS}\n" for s in facts))

    runner = TransformerRunner(model.weights, model.tokenizer)
    template = store.get(PLANTED_RELATION, PLANTED_TEMPLATE_ID)
    records = []
    for subject, obj in facts.items():
        query = template.instantiate(subject)
        prediction = runner.topk(query.prompt, 1)[0]
        records.append(ScenarioSample(
            scenario="exact_fact", prompt=query.prompt, subject=subject,
            subject_char_span=query.subject_char_span, prediction=prediction,
            relation_id=PLANTED_RELATION, template_id=PLANTED_TEMPLATE_ID, gold=obj,
            popularity=PLANTED_VIEWS,
        ).to_record())
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "seed": seed,
              "mixture": {"exact_fact": len(records)}, "source": "planted"}
    write_dataset(paths["dataset"], header, records)

    written = {k: str(v) for k, v in paths.items()}
    wrong = [r["subject"] for r in records if r["prediction"] != r["gold"]]
    log_event(run_id, "gen_weights", input_data={"kind": kind, "seed": seed, "facts": len(facts)},
              output_data=written, outcome="warning" if wrong else "ok",
              extra={"mispredicted_subjects": wrong})
    return written
