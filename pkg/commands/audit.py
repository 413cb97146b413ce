# commands/audit.py

import csv
import io
from pathlib import Path
from typing import Dict, List, Literal, Optional

from audit.audit import AuditRow, run_audit
from audit.importers import load_counterfact, rows_from_dataset
from commands.common import load_runner, new_run_id, require_file
from core.config_schema import RunConfig
from diagnostics.bias_probes import BiasProbe
from diagnostics.relations import SubstitutionTable
from engine.tokenizer import TokenizationError
from scenarios.dataset_io import read_dataset
from tracing.causal_trace import calibrate_noise
from utils.persistence import atomic_write_text, write_json
from utils.structured_logger import log_event


def _write_flag_csv(path: Path, entries: List[dict]) -> None:
    columns = ["index", "prompt", "prediction", "p_clean", "p_noised", "te", "te_norm"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for entry in entries:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in entry.items()})
    atomic_write_text(path, buf.getvalue())


def _tokenizable_rows(rows: List[AuditRow], tokenizer) -> List[AuditRow]:
    usable = []
    for row in rows:
        if row.subject_char_span is None:
            continue
        try:
            tokenizer.encode(row.prompt)
        except TokenizationError:
            continue
        usable.append(row)
    return usable


def cmd_audit(config: RunConfig, dataset_path: Path, input_format: Literal["dataset", "counterfact"] = "dataset",
              out_path: Optional[Path] = None, extracts: bool = False) -> Dict:
    """Audit report for a (query, prediction) dataset; optional CSV extracts per flag."""
    run_id = new_run_id("audit")
    dataset_path = require_file(dataset_path, "audit input")
    if input_format == "counterfact":
        rows = load_counterfact(dataset_path)
    else:
        rows = rows_from_dataset(read_dataset(dataset_path)[1])
    runner = load_runner(config)
    probe = BiasProbe(runner, SubstitutionTable.load(), config.topk_bias, config.lexical_min_fragment)

    usable = _tokenizable_rows(rows, runner.tokenizer)
    noise_sigma = 0.0
    if usable:
        noise_sigma = calibrate_noise(runner.weights, runner.tokenizer, [r.as_query() for r in usable],
                                      config.noise_multiplier, require_subject_first=False)
    report = run_audit(rows, probe, runner.weights, runner.tokenizer, noise_sigma,
                       n_runs=config.n_noise_runs, seed=config.seed,
                       low_te_threshold=config.low_te_threshold, model_rows=usable)
    body = report.to_dict()
    body["config"] = config.echo()
    body["noise_sigma"] = noise_sigma
    body["input_format"] = input_format

    out_path = Path(out_path) if out_path else config.outputs.audit_path
    write_json(out_path, body)
    if extracts:
        _write_flag_csv(out_path.with_name(out_path.stem + "_negative_te.csv"), report.total_effect.negative_te)
        _write_flag_csv(out_path.with_name(out_path.stem + "_low_te.csv"), report.total_effect.low_te)
        _write_flag_csv(out_path.with_name(out_path.stem + "_negation.csv"), report.negation_samples)
    log_event(run_id, "done", output_data={"rows": len(rows), "report": str(out_path)})
    return body
