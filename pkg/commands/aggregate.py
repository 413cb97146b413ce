# commands/aggregate.py

from dataclasses import asdict
from pathlib import Path
from typing import Dict, Optional

from aggregation.aie import AggregationError, aggregate, peak_significance, stratify_by_probability, write_lineplot_csv
from commands.common import new_run_id, require_file
from core.config_schema import RunConfig
from tracing.grid_io import read_grid_csv
from utils.persistence import read_json, write_json
from utils.structured_logger import log_event


def cmd_aggregate(config: RunConfig, trace_dir: Optional[Path] = None, out_dir: Optional[Path] = None,
                  scenario: Optional[str] = None) -> Dict:
    """Binned AIE lineplot CSV plus a report with the significant peak per component."""
    run_id = new_run_id("aggregate")
    trace_dir = Path(trace_dir) if trace_dir else config.outputs.trace_dir
    out_dir = Path(out_dir) if out_dir else config.outputs.aggregate_dir
    manifest = read_json(require_file(trace_dir / "manifest.json", "trace manifest"))

    rows = manifest["rows"]
    if scenario is not None:
        rows = [r for r in rows if r.get("scenario") == scenario]
    if config.stratify is not None:
        rows = stratify_by_probability(rows, [r["p_clean"] for r in rows], config.stratify.mode, config.stratify.k)
    if not rows:
        raise AggregationError("no traced rows to aggregate")

    grids = [read_grid_csv(trace_dir / r["grid"], tuple(r["subject_token_span"]), config.zero_te_epsilon)
             for r in rows]
    result = aggregate(grids, normalized=config.normalized, ci_method=config.ci_method,
                       n_resamples=config.bootstrap_resamples, seed=config.seed)

    peaks = {}
    for component in grids[0].components:
        points = result.for_component(component)
        peaks[component] = [asdict(p) for p in peak_significance(points)] if len(points) >= 2 else []

    write_lineplot_csv(out_dir / "lineplot.csv", result.points)
    report = {
        "config": config.echo(),
        "scenario": scenario,
        "normalized": config.normalized,
        "n_samples": result.n_samples,
        "excluded_zero_te": result.excluded_zero_te,
        "rows": [r["index"] for r in rows],
        "empty_cells": [list(c) for c in result.empty_cells],
        "peaks": peaks,
    }
    write_json(out_dir / "report.json", report)
    log_event(run_id, "done", output_data={"samples": result.n_samples, "peaks": peaks})
    return report
