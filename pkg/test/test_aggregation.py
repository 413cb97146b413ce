#!/usr/bin/env python3
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

# Make project root importable
PROJECT_ROOT = Path(__file__).parent.parent.resolve()
sys.path.insert(0, str(PROJECT_ROOT))

from aggregation.aie import (
    LINEPLOT_COLUMNS,
    AggregationError,
    AiePoint,
    aggregate,
    lineplot_csv,
    peak_significance,
    stratify_by_probability,
)
from aggregation.binning import BINS, BinningError, bin_positions
from helpers import print_header
from tracing.causal_trace import TraceGrid


def make_grid(nie: np.ndarray, span, te: float = 0.5, zero_te: bool = False, components=("mlp",)) -> TraceGrid:
    if nie.ndim == 2:
        nie = nie[:, :, None]
    return TraceGrid(
        components=tuple(components),
        token_texts=tuple(f"t{i}" for i in range(nie.shape[0])),
        subject_token_span=tuple(span),
        ie=nie * te,
        nie=nie,
        p_clean=0.9,
        p_noised=0.9 - te,
        te=te,
        te_norm=te / 0.9,
        zero_te=zero_te,
    )


def _oracle_bin(n: int, start: int, end: int, pos: int) -> str:
    if pos == n - 1:
        return "last_token"
    if start <= pos < end:
        if pos == end - 1:
            return "last_subject"
        return "first_subject" if pos == start else "middle_subject"
    return "first_subsequent" if pos == end else "further"


# --- binning ---

def test_binning_examples():
    print_header("Token bins")
    assert bin_positions(6, (1, 3)) == {
        0: "further", 1: "first_subject", 2: "last_subject",
        3: "first_subsequent", 4: "further", 5: "last_token",
    }
    assert bin_positions(3, (0, 1)) == {0: "last_subject", 1: "first_subsequent", 2: "last_token"}
    assert bin_positions(3, (0, 2)) == {0: "first_subject", 1: "last_subject", 2: "last_token"}
    assert bin_positions(5, (0, 4))[2] == "middle_subject"


def test_binning_brute_force():
    checked = 0
    for n in range(2, 12):
        for start in range(0, n - 1):
            for end in range(start + 1, n):
                bins = bin_positions(n, (start, end))
                assert sorted(bins) == list(range(n))
                for pos, name in bins.items():
                    assert name == _oracle_bin(n, start, end, pos)
                    assert name in BINS
                assert list(bins.values()).count("last_token") == 1
                assert list(bins.values()).count("last_subject") == 1
                checked += 1
    assert checked >= 200


def test_binning_errors():
    with pytest.raises(BinningError):
        bin_positions(4, (2, 2))
    with pytest.raises(BinningError):
        bin_positions(4, (1, 4))


# --- aggregation ---

def test_aie_matches_flat_oracle():
    print_header("AIE oracle")
    rng = np.random.default_rng(0)
    grids = []
    for _ in range(1000):
        n = int(rng.integers(3, 9))
        start = int(rng.integers(0, n - 1))
        end = int(rng.integers(start + 1, n))
        grids.append(make_grid(rng.uniform(-1, 1, size=(n, 2)), (start, end)))

    cells = defaultdict(list)
    for g in grids:
        n = g.n_positions
        start, end = g.subject_token_span
        per_bin = defaultdict(list)
        for pos in range(n):
            per_bin[_oracle_bin(n, start, end, pos)].append(pos)
        for name, positions in per_bin.items():
            for layer in range(2):
                cells[(name, layer)].append(sum(g.nie[p, layer, 0] for p in positions) / len(positions))

    result = aggregate(grids)
    assert result.n_samples == 1000
    assert len(result.points) == len(cells)
    for p in result.points:
        values = cells[(p.bin, p.layer)]
        mean = sum(values) / len(values)
        assert p.n == len(values)
        assert p.aie == pytest.approx(mean, abs=1e-12)
        if len(values) > 1:
            sd = (sum((v - mean) ** 2 for v in values) / (len(values) - 1)) ** 0.5
            half = 1.96 * sd / len(values) ** 0.5
            assert p.ci_low == pytest.approx(mean - half, abs=1e-12)
            assert p.ci_high == pytest.approx(mean + half, abs=1e-12)


def test_unnormalized_uses_raw_effects():
    grid = make_grid(np.full((3, 1), 0.5), (0, 1), te=0.2)
    result = aggregate([grid], normalized=False)
    assert all(p.aie == pytest.approx(0.1) for p in result.points)


def test_single_sample_has_degenerate_interval():
    result = aggregate([make_grid(np.full((3, 1), 0.25), (0, 1))])
    for p in result.points:
        assert p.ci_low == p.ci_high == p.aie == 0.25
    assert ("first_subject", 0, "mlp") in result.empty_cells
    assert ("middle_subject", 0, "mlp") in result.empty_cells


def test_zero_te_grids_excluded_when_normalized():
    good = make_grid(np.full((3, 1), 0.5), (0, 1))
    flat = make_grid(np.zeros((3, 1)), (0, 1), te=0.0, zero_te=True)
    result = aggregate([good, flat])
    assert result.n_samples == 1
    assert result.excluded_zero_te == 1
    assert aggregate([good, flat], normalized=False).n_samples == 2
    with pytest.raises(AggregationError):
        aggregate([flat])


def test_mixed_grid_shapes_rejected():
    with pytest.raises(AggregationError):
        aggregate([make_grid(np.zeros((3, 1)), (0, 1)), make_grid(np.zeros((3, 2)), (0, 1))])
    with pytest.raises(AggregationError):
        aggregate([])


def test_bootstrap_interval_is_seeded_and_contains_mean():
    rng = np.random.default_rng(1)
    grids = [make_grid(rng.uniform(-1, 1, size=(4, 2)), (0, 2)) for _ in range(30)]
    a = aggregate(grids, ci_method="bootstrap", n_resamples=200, seed=3)
    b = aggregate(grids, ci_method="bootstrap", n_resamples=200, seed=3)
    assert a.points == b.points
    for p in a.points:
        assert p.ci_low <= p.aie <= p.ci_high


# --- peaks ---

def _point(name, aie, low, high, layer=0):
    return AiePoint(name, layer, "mlp", aie, low, high, 10)


def test_peak_found_when_interval_clears_all_others():
    points = [_point("last_subject", 0.8, 0.7, 0.9), _point("further", 0.1, 0.0, 0.2),
              _point("last_token", 0.3, 0.2, 0.69)]
    assert peak_significance(points) == [points[0]]


def test_no_peak_when_intervals_touch():
    points = [_point("last_subject", 0.8, 0.7, 0.9), _point("last_token", 0.5, 0.3, 0.7)]
    assert peak_significance(points) == []


def test_peak_preconditions():
    with pytest.raises(AggregationError):
        peak_significance([_point("last_subject", 0.8, 0.7, 0.9)])
    mixed = [_point("last_subject", 0.8, 0.7, 0.9), AiePoint("further", 0, "attn", 0.1, 0.0, 0.2, 10)]
    with pytest.raises(AggregationError):
        peak_significance(mixed)


# --- stratification and output ---

def test_stratify_by_probability():
    items = ["a", "b", "c", "d"]
    p = [0.2, 0.9, 0.2, 0.5]
    assert stratify_by_probability(items, p, "top", 2) == ["b", "d"]
    assert stratify_by_probability(items, p, "bottom", 2) == ["a", "c"]
    assert stratify_by_probability(items, p, "bottom", 10) == items


def test_lineplot_csv_layout():
    text = lineplot_csv([_point("last_subject", 0.5, 0.25, 0.75, layer=3)])
    lines = text.splitlines()
    assert lines[0] == ",".join(LINEPLOT_COLUMNS)
    assert lines[1] == "last_subject,3,mlp,0.5,0.25,0.75,10"
