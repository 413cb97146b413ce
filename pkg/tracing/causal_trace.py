# tracing/causal_trace.py

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from engine.tokenizer import Tokenizer, TokenSequence, tokenize
from engine.transformer import (
    COMPONENTS,
    InterventionSpec,
    PatchEntry,
    forward_with_capture,
    forward_with_intervention,
    softmax,
)
from engine.weights import WeightBundle

ZERO_TE_EPSILON = 1e-12


class DegenerateTargetError(Exception):
    pass


class TokenOutOfVocabularyError(DegenerateTargetError):
    pass


class ZeroCleanProbabilityError(DegenerateTargetError):
    pass


class PromptQuery(Protocol):
    prompt: str
    subject_char_span: Tuple[int, int]


@dataclass(frozen=True)
class TraceTarget:
    query: PromptQuery
    traced_token: int
    n_noise_runs: int
    noise_sigma: float
    base_seed: int
    require_subject_first: bool = True

    def __post_init__(self):
        if self.n_noise_runs < 1:
            raise ValueError("n_noise_runs must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class TotalEffect:
    p_clean: float
    p_noised: float
    te: float
    te_norm: float


@dataclass(frozen=True)
class TraceGrid:
    """IE/NIE per (position, layer, component) for one traced prompt."""
    components: Tuple[str, ...]
    token_texts: Tuple[str, ...]
    subject_token_span: Tuple[int, int]
    ie: np.ndarray
    nie: np.ndarray
    p_clean: float
    p_noised: float
    te: float
    te_norm: float
    zero_te: bool

    @property
    def n_positions(self) -> int:
        return self.ie.shape[0]

    @property
    def n_layers(self) -> int:
        return self.ie.shape[1]

    def component_index(self, component: str) -> int:
        return self.components.index(component)


def normalized_effect(ie: np.ndarray, te: float, epsilon: float = ZERO_TE_EPSILON) -> Tuple[np.ndarray, bool]:
    """NIE = clip(ie / |te|, -1, 1); zero when |te| falls below epsilon (flagged)."""
    if abs(te) < epsilon:
        return np.zeros_like(ie), True
    return np.clip(ie / abs(te), -1.0, 1.0), False


class _Context:
    """Clean trace plus the per-run noised probabilities every cell is compared against."""

    def __init__(self, weights: WeightBundle, tokenizer: Tokenizer, target: TraceTarget):
        if not (0 <= target.traced_token < weights.config.vocab_size):
            raise TokenOutOfVocabularyError(f"traced token {target.traced_token} is outside the vocabulary")
        self.weights = weights
        self.target = target
        self.tokens, self.subject_span = tokenize(
            tokenizer, target.query.prompt, target.query.subject_char_span,
            require_subject_first=target.require_subject_first,
        )
        self.token_texts = tuple(tokenizer.decode_token(t) for t in self.tokens.token_ids)
        self.clean = forward_with_capture(weights, self.tokens)
        self.p_clean = self._prob(self.clean.final_logits)
        self.p_noised_runs = np.array([self.run(r) for r in range(target.n_noise_runs)])

    def _prob(self, logits: np.ndarray) -> float:
        return float(softmax(logits[-1])[self.target.traced_token])

    def spec(self, run: int, patches: Tuple[PatchEntry, ...] = ()) -> InterventionSpec:
        return InterventionSpec(
            noise_span=self.subject_span,
            noise_sigma=self.target.noise_sigma,
            noise_seed=self.target.base_seed + run,
            patches=patches,
            reference=self.clean if patches else None,
        )

    def run(self, run: int, patches: Tuple[PatchEntry, ...] = ()) -> float:
        trace = forward_with_intervention(self.weights, self.tokens, self.spec(run, patches))
        return self._prob(trace.final_logits)

    def total_effect(self) -> Tuple[float, float]:
        p_noised = float(np.mean(self.p_noised_runs))
        te = float(np.mean(self.p_clean - self.p_noised_runs))
        return p_noised, te

    def indirect_effect(self, patch: PatchEntry) -> float:
        patched = np.array([self.run(r, (patch,)) for r in range(self.target.n_noise_runs)])
        return float(np.mean(patched - self.p_noised_runs))


def total_effect(weights: WeightBundle, tokenizer: Tokenizer, target: TraceTarget) -> TotalEffect:
    """
    p_noised averages n_noise_runs seeded runs (seed base_seed + r);
    te = p_clean - p_noised and te_norm = te / p_clean.
    """
    ctx = _Context(weights, tokenizer, target)
    p_noised, te = ctx.total_effect()
    if ctx.p_clean == 0.0:
        raise ZeroCleanProbabilityError(
            f"traced token {target.traced_token} has zero clean probability for '{target.query.prompt}'"
        )
    return TotalEffect(p_clean=ctx.p_clean, p_noised=p_noised, te=te, te_norm=te / ctx.p_clean)


def trace_grid(weights: WeightBundle, tokenizer: Tokenizer, target: TraceTarget,
               components: Sequence[str] = COMPONENTS, window_radius: Optional[int] = None,
               max_workers: int = 1, zero_te_epsilon: float = ZERO_TE_EPSILON) -> TraceGrid:
    """
    Restores one clean state at a time inside the noised runs. Every cell
    reuses the same run seeds, so cells differ only by the patch.
    """
    for component in components:
        if component not in COMPONENTS:
            raise ValueError(f"unknown component '{component}'")
    ctx = _Context(weights, tokenizer, target)
    if ctx.p_clean == 0.0:
        raise ZeroCleanProbabilityError(
            f"traced token {target.traced_token} has zero clean probability for '{target.query.prompt}'"
        )
    p_noised, te = ctx.total_effect()

    n_pos, n_layers = len(ctx.tokens), weights.config.n_layers
    cells: List[Tuple[int, int, int, PatchEntry]] = []
    for c, component in enumerate(components):
        radius = 0 if component == "hidden" else window_radius
        for pos in range(n_pos):
            for layer in range(n_layers):
                cells.append((pos, layer, c, PatchEntry(pos, layer, component, radius)))

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            values = list(pool.map(lambda cell: ctx.indirect_effect(cell[3]), cells))
    else:
        values = [ctx.indirect_effect(cell[3]) for cell in cells]

    ie = np.zeros((n_pos, n_layers, len(components)))
    for (pos, layer, c, _), value in zip(cells, values):
        ie[pos, layer, c] = value
    nie, zero_te = normalized_effect(ie, te, zero_te_epsilon)

    return TraceGrid(
        components=tuple(components),
        token_texts=ctx.token_texts,
        subject_token_span=ctx.subject_span,
        ie=ie,
        nie=nie,
        p_clean=ctx.p_clean,
        p_noised=p_noised,
        te=te,
        te_norm=te / ctx.p_clean,
        zero_te=zero_te,
    )


def subject_embedding_rows(weights: WeightBundle, tokens: TokenSequence, subject_span: Tuple[int, int]) -> np.ndarray:
    start, end = subject_span
    return weights["wte"][np.asarray(tokens.token_ids[start:end], dtype=np.int64)]


def calibrate_noise(weights: WeightBundle, tokenizer: Tokenizer, queries: Iterable[PromptQuery],
                    multiplier: float = 3.0, require_subject_first: bool = True) -> float:
    """multiplier x population std of every subject-token embedding entry, pooled per occurrence."""
    rows = []
    for query in queries:
        tokens, span = tokenize(tokenizer, query.prompt, query.subject_char_span,
                                require_subject_first=require_subject_first)
        rows.append(subject_embedding_rows(weights, tokens, span))
    if not rows:
        raise DegenerateTargetError("cannot calibrate noise without subjects")
    return float(multiplier * np.std(np.concatenate(rows, axis=0)))
