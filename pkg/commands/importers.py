# commands/importers.py

from pathlib import Path
from typing import Dict

from audit.importers import import_corpus_text, import_lama_facts
from commands.common import new_run_id, require_file
from scenarios.dataset_io import write_fact_tuples
from utils.persistence import write_jsonl
from utils.structured_logger import log_event


def cmd_import_facts(lama_path: Path, out_path: Path) -> Dict[str, int]:
    """LAMA/T-REx JSONL to the fact TSV the dataset builder reads."""
    run_id = new_run_id("import-facts")
    facts = import_lama_facts(require_file(lama_path, "LAMA facts file"))
    write_fact_tuples(Path(out_path), facts)
    relations = sorted({f.relation_id for f in facts})
    log_event(run_id, "import_facts", input_data={"source": str(lama_path)},
              output_data={"facts": len(facts), "relations": relations, "out": str(out_path)})
    return {"facts": len(facts), "relations": len(relations)}


def cmd_import_corpus(text_path: Path, out_path: Path) -> Dict[str, int]:
    """Titled plain-text dump to the JSONL corpus used by the generic builder."""
    run_id = new_run_id("import-corpus")
    entries = import_corpus_text(require_file(text_path, "corpus text"))
    write_jsonl(Path(out_path), [{"title": e.title, "sentences": list(e.sentences)} for e in entries])
    n_sentences = sum(len(e.sentences) for e in entries)
    log_event(run_id, "import_corpus", input_data={"source": str(text_path)},
              output_data={"articles": len(entries), "sentences": n_sentences, "out": str(out_path)})
    return {"articles": len(entries), "sentences": n_sentences}
