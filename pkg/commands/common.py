# commands/common.py

import uuid
from pathlib import Path
from typing import Optional

from core.config_schema import RunConfig
from diagnostics.popularity import PageviewPopularity, PopularityProvider, TsvPopularity
from engine.runner import TransformerRunner
from engine.tokenizer import load_tokenizer
from engine.weights import load_weights
from scenarios.dataset_io import MissingInputError
from scenarios.entity_check import EntityChecker, LabelSetChecker, WikidataChecker
from utils.http_cache import CachedJsonClient
from utils.structured_logger import log_event


def new_run_id(command: str) -> str:
    return f"{command}-{uuid.uuid4().hex[:12]}"


def require_file(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise MissingInputError(f"no {what} configured")
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path}")
    return path


def load_runner(config: RunConfig) -> TransformerRunner:
    weights = load_weights(require_file(config.weights_path, "weights file"))
    vocab = require_file(config.vocab_path, "vocabulary file") if config.tokenizer == "whitespace" else None
    return TransformerRunner(weights, load_tokenizer(config.tokenizer, vocab))


def popularity_provider(config: RunConfig) -> PopularityProvider:
    pop = config.popularity
    if pop.source == "tsv":
        return TsvPopularity.load(require_file(pop.tsv_path, "popularity TSV"))
    return PageviewPopularity(CachedJsonClient(timeout=pop.timeout_seconds), year=pop.year, project=pop.project)


def entity_checker(config: RunConfig, run_id: str) -> EntityChecker:
    check = config.entity_check
    if check.source == "http":
        return WikidataChecker(CachedJsonClient(timeout=check.timeout_seconds))
    if check.labels_path is None or not Path(check.labels_path).exists():
        log_event(run_id, "entity_labels_missing", input_data={"labels_path": str(check.labels_path)},
                  outcome="warning")
        return LabelSetChecker([])
    return LabelSetChecker.load(check.labels_path)
