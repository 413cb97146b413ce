# commands/trace.py

from pathlib import Path
from typing import Dict, List, Optional

from tqdm import tqdm

from commands.common import load_runner, new_run_id
from core.config_schema import RunConfig
from engine.tokenizer import TokenizationError, tokenize
from engine.transformer import InterventionError, SequenceTooLongError
from scenarios.dataset_io import TraceRow, read_dataset, trace_row
from tracing.causal_trace import DegenerateTargetError, TraceTarget, calibrate_noise, trace_grid
from tracing.grid_io import write_grid_csv, write_heatmap_csv
from utils.persistence import write_json
from utils.structured_logger import log_event


def _skip(row: TraceRow, reason: str) -> dict:
    return {"index": row.index, "prompt": row.prompt, "reason": reason}


def cmd_trace(config: RunConfig, dataset_path: Path, out_dir: Optional[Path] = None) -> Dict:
    """One grid CSV and one heatmap CSV per dataset row, plus a manifest."""
    run_id = new_run_id("trace")
    out_dir = Path(out_dir) if out_dir else config.outputs.trace_dir
    runner = load_runner(config)
    weights, tokenizer = runner.weights, runner.tokenizer
    header, records = read_dataset(dataset_path)
    rows = [trace_row(i, r) for i, r in enumerate(records)]

    skipped: List[dict] = []
    usable: List[TraceRow] = []
    for row in rows:
        if row.subject_char_span is None:
            skipped.append(_skip(row, "no subject span"))
            continue
        usable.append(row)

    noise_sigma = None
    calibration_rows = []
    for row in usable:
        try:
            tokenize(tokenizer, row.prompt, row.subject_char_span)
            calibration_rows.append(row)
        except TokenizationError as e:
            skipped.append(_skip(row, f"tokenization failed: {e}"))
    if calibration_rows:
        noise_sigma = calibrate_noise(weights, tokenizer, calibration_rows, config.noise_multiplier)

    window = config.effective_window()
    manifest_rows: List[dict] = []
    for row in tqdm(calibration_rows, desc="trace"):
        token = row.traced_token
        if token is None and row.prediction is not None:
            token = tokenizer.token_id(row.prediction.strip())
        if token is None:
            skipped.append(_skip(row, "prediction is not a vocabulary token"))
            continue
        target = TraceTarget(query=row, traced_token=token, n_noise_runs=config.n_noise_runs,
                             noise_sigma=noise_sigma, base_seed=config.seed + row.index * config.n_noise_runs)
        try:
            grid = trace_grid(weights, tokenizer, target, components=[config.component], window_radius=window,
                              max_workers=config.max_workers, zero_te_epsilon=config.zero_te_epsilon)
        except (DegenerateTargetError, TokenizationError, SequenceTooLongError, InterventionError) as e:
            skipped.append(_skip(row, str(e)))
            log_event(run_id, "row_skipped", input_data={"index": row.index}, output_data=str(e),
                      outcome="warning")
            continue
        name = f"row_{row.index:05d}.csv"
        write_grid_csv(out_dir / "grids" / name, grid)
        write_heatmap_csv(out_dir / "heatmaps" / name, grid, config.component)
        if grid.zero_te:
            log_event(run_id, "zero_te", input_data={"index": row.index}, outcome="warning")
        manifest_rows.append({
            "index": row.index,
            "grid": f"grids/{name}",
            "heatmap": f"heatmaps/{name}",
            "prompt": row.prompt,
            "prediction": row.prediction,
            "scenario": row.scenario,
            "subject_token_span": list(grid.subject_token_span),
            "n_tokens": grid.n_positions,
            "traced_token": token,
            "p_clean": grid.p_clean,
            "p_noised": grid.p_noised,
            "te": grid.te,
            "te_norm": grid.te_norm,
            "zero_te": grid.zero_te,
        })

    manifest = {
        "config": config.echo(),
        "dataset_header": header,
        "component": config.component,
        "window_radius": window,
        "noise_sigma": noise_sigma,
        "rows": manifest_rows,
        "skipped": sorted(skipped, key=lambda s: s["index"]),
        "zero_te": [r["index"] for r in manifest_rows if r["zero_te"]],
    }
    write_json(out_dir / "manifest.json", manifest)
    log_event(run_id, "done", output_data={"traced": len(manifest_rows), "skipped": len(skipped)})
    return manifest
