# audit/audit.py

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm import tqdm

from diagnostics.bias_probes import BiasProbe
from diagnostics.relations import FactQuery
from engine.tokenizer import Tokenizer
from engine.weights import WeightBundle
from tracing.causal_trace import TokenOutOfVocabularyError, TraceTarget, ZeroCleanProbabilityError, total_effect

NEGATION = re.compile(r"\bnot\b", re.IGNORECASE)
POPULARITY_BUCKETS: List[Tuple[str, float, float]] = [
    ("[0, 100]", -1, 100),
    ("(100, 1000]", 100, 1000),
    ("(1000, 10000]", 1000, 10000),
    ("(10000, inf)", 10000, float("inf")),
]


class AuditInputError(Exception):
    pass


@dataclass(frozen=True)
class AuditRow:
    index: int
    prompt: str
    subject: Optional[str]
    subject_char_span: Optional[Tuple[int, int]]
    prediction: Optional[str]
    relation_id: Optional[str] = None
    popularity: Optional[int] = None
    gold: Optional[str] = None
    traced_token: Optional[int] = None

    def as_query(self) -> FactQuery:
        return FactQuery(
            relation_id=self.relation_id or "",
            template_id=-1,
            subject=self.subject or "",
            prompt=self.prompt,
            subject_char_span=self.subject_char_span,
        )


@dataclass
class BiasAudit:
    counts: Dict[str, int]
    combinations: Dict[str, int]
    skipped: Dict[str, int]
    prompt_flags: Dict[int, bool] = field(default_factory=dict)


@dataclass
class TotalEffectAudit:
    negative_te: List[dict] = field(default_factory=list)
    low_te: List[dict] = field(default_factory=list)
    zero_p_clean: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)
    te_norm: Dict[int, float] = field(default_factory=dict)


def audit_bias(rows: Sequence[AuditRow], probe: BiasProbe) -> BiasAudit:
    """
    Every applicable filter per row. Kinds are counted individually, and
    rows with two or more cues are also counted per combination.
    """
    counts = Counter({"lexical": 0, "name": 0, "prompt": 0, "any": 0, "multiple": 0})
    combinations: Counter = Counter()
    skipped: Counter = Counter()
    prompt_flags: Dict[int, bool] = {}
    for row in tqdm(rows, desc="bias audit"):
        if row.subject_char_span is None or not row.subject:
            skipped["missing_subject_span"] += 1
            continue
        if not row.prediction or not row.prediction.strip():
            skipped["missing_prediction"] += 1
            continue
        report = probe.report(row.as_query(), row.prediction, external=True)
        prompt_flags[row.index] = report.prompt_bias
        tags = report.tags
        for tag in tags:
            counts[tag] += 1
        if tags:
            counts["any"] += 1
        if len(tags) > 1:
            counts["multiple"] += 1
            combinations["+".join(sorted(tags))] += 1
    return BiasAudit(dict(counts), dict(sorted(combinations.items())), dict(sorted(skipped.items())), prompt_flags)


def popularity_histogram(rows: Sequence[AuditRow]) -> Dict[str, int]:
    hist = {label: 0 for label, _, _ in POPULARITY_BUCKETS}
    for row in rows:
        if row.popularity is None:
            continue
        for label, low, high in POPULARITY_BUCKETS:
            if low < row.popularity <= high:
                hist[label] += 1
                break
    return hist


def _te_entry(row: AuditRow, **values) -> dict:
    return {"index": row.index, "prompt": row.prompt, "prediction": row.prediction, **values}


def audit_total_effect(rows: Sequence[AuditRow], weights: WeightBundle, tokenizer: Tokenizer,
                       noise_sigma: float, n_runs: int = 10, seed: int = 0,
                       low_te_threshold: float = 0.4) -> TotalEffectAudit:
    """
    Seeded total effect per row (seeds derived from the row index). Negative
    TE and TE_norm below the threshold are disjoint flags.
    """
    audit = TotalEffectAudit()
    for row in tqdm(rows, desc="total effect audit"):
        if row.subject_char_span is None or not row.prediction:
            audit.skipped.append(_te_entry(row, reason="missing subject span or prediction"))
            continue
        token = row.traced_token if row.traced_token is not None else tokenizer.token_id(row.prediction.strip())
        if token is None:
            audit.skipped.append(_te_entry(row, reason="prediction is not a single token"))
            continue
        target = TraceTarget(query=row.as_query(), traced_token=token, n_noise_runs=n_runs,
                             noise_sigma=noise_sigma, base_seed=seed + row.index * n_runs,
                             require_subject_first=False)
        try:
            effect = total_effect(weights, tokenizer, target)
        except TokenOutOfVocabularyError:
            audit.skipped.append(_te_entry(row, reason="traced token outside the model vocabulary"))
            continue
        except ZeroCleanProbabilityError:
            audit.zero_p_clean.append(_te_entry(row, p_clean=0.0))
            continue
        values = {"p_clean": effect.p_clean, "p_noised": effect.p_noised, "te": effect.te, "te_norm": effect.te_norm}
        audit.te_norm[row.index] = effect.te_norm
        if effect.te < 0:
            audit.negative_te.append(_te_entry(row, **values))
        elif effect.te_norm < low_te_threshold:
            audit.low_te.append(_te_entry(row, **values))
    return audit


def detect_negation(rows: Sequence[AuditRow]) -> List[dict]:
    return [{"index": r.index, "prompt": r.prompt} for r in rows if NEGATION.search(r.prompt)]


def spearman_te_bias(te_norm_values: Sequence[float], prompt_bias_flags: Sequence[bool]) -> Optional[float]:
    """Spearman rank correlation with mid-ranks; None when either side is constant."""
    if len(te_norm_values) != len(prompt_bias_flags):
        raise AuditInputError(
            f"{len(te_norm_values)} TE values but {len(prompt_bias_flags)} bias flags"
        )
    if len(te_norm_values) < 2:
        raise AuditInputError("rank correlation needs at least two rows")
    x = np.asarray(te_norm_values, dtype=float)
    y = np.asarray(prompt_bias_flags, dtype=float)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return None
    return float(stats.spearmanr(x, y)[0])


@dataclass
class AuditReport:
    n_rows: int
    bias: BiasAudit
    popularity_histogram: Dict[str, int]
    total_effect: TotalEffectAudit
    negation_samples: List[dict]
    spearman_te_bias: Optional[float]
    untokenizable_rows: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "bias_counts": self.bias.counts,
            "bias_combinations": self.bias.combinations,
            "bias_skipped": self.bias.skipped,
            "popularity_histogram": self.popularity_histogram,
            "negative_te_samples": self.total_effect.negative_te,
            "low_te_samples": self.total_effect.low_te,
            "zero_p_clean_samples": self.total_effect.zero_p_clean,
            "te_skipped": self.total_effect.skipped,
            "negation_samples": self.negation_samples,
            "spearman_te_bias": self.spearman_te_bias,
            "spearman_defined": self.spearman_te_bias is not None,
            "untokenizable_rows": self.untokenizable_rows,
        }


def run_audit(rows: Sequence[AuditRow], probe: BiasProbe, weights: WeightBundle, tokenizer: Tokenizer,
              noise_sigma: float, n_runs: int = 10, seed: int = 0, low_te_threshold: float = 0.4,
              model_rows: Optional[Sequence[AuditRow]] = None) -> AuditReport:
    """
    Popularity and negation cover every row; the model-based checks run on
    model_rows (the rows the model can tokenize), defaulting to all rows.
    """
    model_rows = list(rows) if model_rows is None else list(model_rows)
    bias = audit_bias(model_rows, probe)
    te = audit_total_effect(model_rows, weights, tokenizer, noise_sigma, n_runs, seed, low_te_threshold)
    paired = [i for i in sorted(te.te_norm) if i in bias.prompt_flags]
    spearman = None
    if len(paired) >= 2:
        spearman = spearman_te_bias([te.te_norm[i] for i in paired], [bias.prompt_flags[i] for i in paired])
    kept = {r.index for r in model_rows}
    return AuditReport(
        n_rows=len(rows),
        bias=bias,
        popularity_histogram=popularity_histogram(rows),
        total_effect=te,
        negation_samples=detect_negation(rows),
        spearman_te_bias=spearman,
        untokenizable_rows=[r.index for r in rows if r.index not in kept],
    )
