# tracing/grid_io.py

import csv
import io
from pathlib import Path
from typing import Tuple

import numpy as np

from tracing.causal_trace import TraceGrid, normalized_effect
from utils.persistence import atomic_write_text

GRID_COLUMNS = ["position", "token_text", "layer", "component", "ie", "nie", "p_clean", "p_noised", "te"]


class GridFormatError(Exception):
    pass


def _num(value: float) -> str:
    return repr(float(value))


def grid_to_csv(grid: TraceGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_COLUMNS)
    for c, component in enumerate(grid.components):
        for pos in range(grid.n_positions):
            for layer in range(grid.n_layers):
                writer.writerow([
                    pos, grid.token_texts[pos], layer, component,
                    _num(grid.ie[pos, layer, c]), _num(grid.nie[pos, layer, c]),
                    _num(grid.p_clean), _num(grid.p_noised), _num(grid.te),
                ])
    return buf.getvalue()


def write_grid_csv(path: Path, grid: TraceGrid) -> None:
    atomic_write_text(Path(path), grid_to_csv(grid))


def write_heatmap_csv(path: Path, grid: TraceGrid, component: str, normalized: bool = False) -> None:
    """Position x layer table for one component, no binning."""
    c = grid.component_index(component)
    values = grid.nie if normalized else grid.ie
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["position", "token_text"] + [f"layer_{l}" for l in range(grid.n_layers)])
    for pos in range(grid.n_positions):
        writer.writerow([pos, grid.token_texts[pos]] + [_num(values[pos, l, c]) for l in range(grid.n_layers)])
    atomic_write_text(Path(path), buf.getvalue())


def read_grid_csv(path: Path, subject_token_span: Tuple[int, int],
                  zero_te_epsilon: float = 1e-12) -> TraceGrid:
    """Rebuilds a TraceGrid from its CSV; the subject span comes from the run manifest."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != GRID_COLUMNS:
            raise GridFormatError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise GridFormatError(f"{path}: empty grid")

    components = list(dict.fromkeys(r["component"] for r in rows))
    n_pos = max(int(r["position"]) for r in rows) + 1
    n_layers = max(int(r["layer"]) for r in rows) + 1
    if len(rows) != n_pos * n_layers * len(components):
        raise GridFormatError(f"{path}: {len(rows)} rows do not form a full grid")

    ie = np.zeros((n_pos, n_layers, len(components)))
    token_texts = [""] * n_pos
    for r in rows:
        pos, layer = int(r["position"]), int(r["layer"])
        ie[pos, layer, components.index(r["component"])] = float(r["ie"])
        token_texts[pos] = r["token_text"]
    p_clean, p_noised, te = float(rows[0]["p_clean"]), float(rows[0]["p_noised"]), float(rows[0]["te"])
    nie, zero_te = normalized_effect(ie, te, zero_te_epsilon)
    return TraceGrid(
        components=tuple(components),
        token_texts=tuple(token_texts),
        subject_token_span=tuple(subject_token_span),
        ie=ie,
        nie=nie,
        p_clean=p_clean,
        p_noised=p_noised,
        te=te,
        te_norm=te / p_clean if p_clean else float("nan"),
        zero_te=zero_te,
    )
