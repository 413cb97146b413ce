# aggregation/aie.py

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats

from aggregation.binning import BINS, bin_positions
from tracing.causal_trace import TraceGrid
from utils.persistence import atomic_write_text

Z_95 = 1.96
LINEPLOT_COLUMNS = ["bin", "layer", "component", "aie", "ci_low", "ci_high", "n"]

CellKey = Tuple[str, int, str]
T = TypeVar("T")


class AggregationError(Exception):
    pass


@dataclass(frozen=True)
class AiePoint:
    bin: str
    layer: int
    component: str
    aie: float
    ci_low: float
    ci_high: float
    n: int


@dataclass(frozen=True)
class AggregateResult:
    points: List[AiePoint]
    empty_cells: List[CellKey] = field(default_factory=list)
    n_samples: int = 0
    excluded_zero_te: int = 0

    def for_component(self, component: str) -> List[AiePoint]:
        return [p for p in self.points if p.component == component]


def sample_bin_means(grid: TraceGrid, normalized: bool) -> Dict[CellKey, float]:
    """Mean over the positions of each bin, per (layer, component), for one sample."""
    values = grid.nie if normalized else grid.ie
    bins = bin_positions(grid.n_positions, grid.subject_token_span)
    by_bin: Dict[str, List[int]] = defaultdict(list)
    for pos, name in bins.items():
        by_bin[name].append(pos)
    out: Dict[CellKey, float] = {}
    for c, component in enumerate(grid.components):
        for name, positions in by_bin.items():
            for layer in range(grid.n_layers):
                out[(name, layer, component)] = float(np.mean(values[positions, layer, c]))
    return out


def _normal_ci(values: np.ndarray, aie: float) -> Tuple[float, float]:
    if len(values) == 1:
        return aie, aie
    half = Z_95 * float(stats.sem(values, ddof=1))
    return aie - half, aie + half


def _bootstrap_ci(values: np.ndarray, aie: float, rng: np.random.Generator, n_resamples: int) -> Tuple[float, float]:
    if len(values) == 1:
        return aie, aie
    idx = rng.integers(0, len(values), size=(n_resamples, len(values)))
    low, high = np.percentile(values[idx].mean(axis=1), [2.5, 97.5])
    return min(float(low), aie), max(float(high), aie)


def aggregate(grids: Sequence[TraceGrid], normalized: bool = True,
              ci_method: Literal["normal", "bootstrap"] = "normal",
              n_resamples: int = 1000, seed: int = 0) -> AggregateResult:
    """
    Average indirect effect per (bin, layer, component): per-sample bin
    means first, then the mean across samples, with a 95% interval.
    Normalized mode drops zero-TE samples.
    """
    if not grids:
        raise AggregationError("no grids to aggregate")
    shape = (grids[0].n_layers, grids[0].components)
    for g in grids:
        if (g.n_layers, g.components) != shape:
            raise AggregationError(
                f"mixed grid shapes: {g.n_layers} layers {g.components} vs {shape[0]} layers {shape[1]}"
            )
    kept = [g for g in grids if not (normalized and g.zero_te)]
    if not kept:
        raise AggregationError("every grid has zero total effect; nothing to normalize")

    cells: Dict[CellKey, List[float]] = defaultdict(list)
    for grid in kept:
        for key, value in sample_bin_means(grid, normalized).items():
            cells[key].append(value)

    rng = np.random.default_rng(seed)
    n_layers, components = shape
    points: List[AiePoint] = []
    empty: List[CellKey] = []
    for component in components:
        for name in BINS:
            for layer in range(n_layers):
                key = (name, layer, component)
                if key not in cells:
                    empty.append(key)
                    continue
                values = np.asarray(cells[key])
                aie = float(np.mean(values))
                if ci_method == "bootstrap":
                    low, high = _bootstrap_ci(values, aie, rng, n_resamples)
                else:
                    low, high = _normal_ci(values, aie)
                points.append(AiePoint(name, layer, component, aie, low, high, len(values)))
    return AggregateResult(points=points, empty_cells=empty, n_samples=len(kept),
                           excluded_zero_te=len(grids) - len(kept))


def peak_significance(points: Sequence[AiePoint]) -> List[AiePoint]:
    """A point is a significant peak iff its ci_low beats every other point's ci_high."""
    if len(points) < 2:
        raise AggregationError("peak testing needs at least two points")
    if len({p.component for p in points}) != 1:
        raise AggregationError("peak testing runs on one component at a time")
    peaks = []
    for i, p in enumerate(points):
        if all(p.ci_low > q.ci_high for j, q in enumerate(points) if j != i):
            peaks.append(p)
    assert len(peaks) <= 1, "two points cannot dominate each other"
    return peaks


def stratify_by_probability(items: Sequence[T], p_clean: Sequence[float],
                            mode: Literal["top", "bottom"], k: int) -> List[T]:
    """Keeps the k items with the highest (top) or lowest (bottom) clean probability; ties keep input order."""
    order = sorted(range(len(items)), key=lambda i: (-p_clean[i] if mode == "top" else p_clean[i], i))
    return [items[i] for i in sorted(order[:k])]


def lineplot_csv(points: Sequence[AiePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LINEPLOT_COLUMNS)
    for p in points:
        writer.writerow([p.bin, p.layer, p.component, repr(p.aie), repr(p.ci_low), repr(p.ci_high), p.n])
    return buf.getvalue()


def write_lineplot_csv(path: Path, points: Sequence[AiePoint]) -> None:
    atomic_write_text(Path(path), lineplot_csv(points))
