# scenarios/builders.py

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from tqdm import tqdm

from core.config_schema import SCENARIOS, RunConfig
from diagnostics.bias_probes import BiasProbe, BiasReport
from diagnostics.criteria import confidence_count, heuristics_verdict, is_correct, is_fact_completion
from diagnostics.popularity import PopularityProvider, views_or_zero
from diagnostics.relations import FactQuery, TemplateStore
from engine.runner import ModelRunner, Prediction
from scenarios.dataset_io import CorpusEntry, FactTuple
from scenarios.synthetic_names import SyntheticSubject
from utils.structured_logger import log_event

GENERIC_MAX_WORDS = 10
GENERIC_MIN_WORDS = 5
GENERIC_MAX_CAPITALS = 3


class CorpusExhaustedError(Exception):
    pass


class SplitTooSmallError(Exception):
    def __init__(self, scenario: str, requested: int, available: int):
        self.scenario = scenario
        super().__init__(f"split '{scenario}' has {available} samples, {requested} requested")


class DisjointnessError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioSample:
    scenario: str
    prompt: str
    subject: str
    subject_char_span: Tuple[int, int]
    prediction: Prediction
    relation_id: Optional[str] = None
    template_id: Optional[int] = None
    gold: Optional[str] = None
    confidence_count: Optional[int] = None
    popularity: Optional[int] = None
    bias_tags: Tuple[str, ...] = ()
    style: Optional[str] = None
    template_topk: Optional[Dict[int, Tuple[str, ...]]] = None
    evidence: Tuple[str, ...] = ()

    @property
    def triple(self) -> Tuple[str, Optional[int], str]:
        return self.subject, self.template_id, self.prediction.token_text.strip()

    def to_record(self) -> dict:
        record = {
            "scenario": self.scenario,
            "relation_id": self.relation_id,
            "template_id": self.template_id,
            "prompt": self.prompt,
            "subject": self.subject,
            "subject_char_span": list(self.subject_char_span),
            "prediction": self.prediction.token_text,
            "prediction_rank": self.prediction.rank,
            "prediction_prob": self.prediction.probability,
            "gold": self.gold,
            "confidence_count": self.confidence_count,
            "popularity": self.popularity,
            "bias_tags": list(self.bias_tags),
            "traced_token": self.prediction.token_id,
        }
        if self.style is not None:
            record["style"] = self.style
        if self.template_topk is not None:
            record["template_topk"] = {str(k): list(v) for k, v in sorted(self.template_topk.items())}
        if self.evidence:
            record["evidence"] = list(self.evidence)
        return record


@dataclass
class BuildResult:
    samples: List[ScenarioSample] = field(default_factory=list)
    rejections: Counter = field(default_factory=Counter)
    side_channel: List[ScenarioSample] = field(default_factory=list)


def answer_sets(facts: Iterable[FactTuple]) -> Dict[str, Set[str]]:
    """Known object labels per relation, plus the first word of multi-word labels."""
    out: Dict[str, Set[str]] = {}
    for fact in facts:
        labels = out.setdefault(fact.relation_id, set())
        labels.add(fact.object)
        labels.add(fact.object.split()[0])
    return out


def _subjects_with_gold(facts: Iterable[FactTuple], relations: Sequence[str]) -> List[Tuple[str, str, str]]:
    seen: Dict[Tuple[str, str], str] = {}
    for fact in facts:
        if fact.relation_id in relations:
            seen.setdefault((fact.relation_id, fact.subject), fact.object)
    return [(rel, subj, gold) for (rel, subj), gold in seen.items()]


class _SubjectProbe:
    """Top-k predictions of every template for one (relation, subject)."""

    def __init__(self, runner: ModelRunner, store: TemplateStore, relation_id: str, subject: str, k: int):
        self.queries: Dict[int, FactQuery] = {q.template_id: q for q in store.queries(relation_id, subject)}
        self.topk: Dict[int, List[Prediction]] = {tid: runner.topk(q.prompt, k) for tid, q in self.queries.items()}

    def texts(self) -> Dict[int, Tuple[str, ...]]:
        return {tid: tuple(p.token_text.strip() for p in preds) for tid, preds in self.topk.items()}

    def candidates(self) -> List[str]:
        ordered: Dict[str, None] = {}
        for preds in self.topk.values():
            for p in preds:
                ordered.setdefault(p.token_text.strip(), None)
        return list(ordered)

    def hits(self, candidate: str) -> List[Tuple[FactQuery, Prediction]]:
        out = []
        for tid, preds in self.topk.items():
            for p in preds:
                if p.token_text.strip() == candidate:
                    out.append((self.queries[tid], p))
                    break
        return out


def build_guesswork(facts: Sequence[FactTuple], store: TemplateStore, runner: ModelRunner,
                    popularity: PopularityProvider, config: RunConfig,
                    answers: Optional[Mapping[str, Set[str]]] = None) -> BuildResult:
    """Valid-typed predictions found in the top-k of exactly one template, for unmemorized subjects."""
    answers = answers if answers is not None else answer_sets(facts)
    result = BuildResult()
    for relation_id, subject, gold in tqdm(_subjects_with_gold(facts, config.relations), desc="guesswork"):
        views = views_or_zero(popularity, subject)
        if views > config.popularity_threshold:
            result.rejections["popular_subject"] += 1
            continue
        probe = _SubjectProbe(runner, store, relation_id, subject, config.topk_confidence)
        for candidate in probe.candidates():
            hits = probe.hits(candidate)
            if not is_fact_completion(relation_id, hits[0][1], answers.get(relation_id, set())):
                result.rejections["trivial_prediction"] += 1
                continue
            count = confidence_count(probe.topk, candidate)
            if count != 1:
                result.rejections["count_not_one"] += 1
                continue
            query, prediction = hits[0]
            result.samples.append(ScenarioSample(
                scenario="guesswork", prompt=query.prompt, subject=subject,
                subject_char_span=query.subject_char_span, prediction=prediction,
                relation_id=relation_id, template_id=query.template_id, gold=gold,
                confidence_count=count, popularity=views, template_topk=probe.texts(),
            ))
    log_event("build", "guesswork", output_data={"samples": len(result.samples),
                                                 "rejections": dict(result.rejections)})
    return result


def _heuristics_sample(relation_id: str, synthetic: SyntheticSubject, sp: _SubjectProbe, query: FactQuery,
                       prediction: Prediction, report: BiasReport, count: int) -> ScenarioSample:
    return ScenarioSample(
        scenario="heuristics", prompt=query.prompt, subject=synthetic.name,
        subject_char_span=query.subject_char_span, prediction=prediction,
        relation_id=relation_id, template_id=query.template_id, gold=None,
        confidence_count=count, popularity=0, bias_tags=tuple(report.tags),
        style=synthetic.style, template_topk=sp.texts(), evidence=report.evidence,
    )


def build_heuristics(subjects: Sequence[Tuple[str, SyntheticSubject]], store: TemplateStore,
                     runner: ModelRunner, probe: BiasProbe, config: RunConfig,
                     answers: Mapping[str, Set[str]]) -> BuildResult:
    """
    Confident predictions for synthetic subjects that exactly one surface
    cue explains. Each template hit is classified first; the subject counts
    as confident only if enough single-cue templates remain. Templates with
    no cue go to the side channel when they alone reach the threshold.
    """
    result = BuildResult()
    for relation_id, synthetic in tqdm(subjects, desc="heuristics"):
        sp = _SubjectProbe(runner, store, relation_id, synthetic.name, config.topk_confidence)
        for candidate in sp.candidates():
            hits = sp.hits(candidate)
            if not is_fact_completion(relation_id, hits[0][1], answers.get(relation_id, set())):
                result.rejections["trivial_prediction"] += 1
                continue
            if confidence_count(sp.topk, candidate) < config.confidence_threshold:
                result.rejections["not_confident"] += 1
                continue
            single: List[Tuple[FactQuery, Prediction, BiasReport]] = []
            no_cue: List[Tuple[FactQuery, Prediction, BiasReport]] = []
            for query, prediction in hits:
                report = probe.report(query, candidate)
                verdict = heuristics_verdict(report.lexical_overlap, report.name_bias, report.prompt_bias,
                                             memorized=False)
                if verdict.kind == "multiple":
                    result.rejections["multiple_bias"] += 1
                elif verdict.kind == "none":
                    result.rejections["no_bias"] += 1
                    no_cue.append((query, prediction, report))
                else:
                    single.append((query, prediction, report))
            if len(single) >= config.confidence_threshold:
                result.samples.extend(_heuristics_sample(relation_id, synthetic, sp, q, p, r, len(single))
                                      for q, p, r in single)
            elif single:
                result.rejections["not_confident_after_filter"] += 1
            if len(no_cue) >= config.confidence_threshold:
                result.side_channel.extend(_heuristics_sample(relation_id, synthetic, sp, q, p, r, len(no_cue))
                                           for q, p, r in no_cue)
    log_event("build", "heuristics", output_data={"samples": len(result.samples),
                                                  "side_channel": len(result.side_channel),
                                                  "rejections": dict(result.rejections)})
    return result


def build_exact_fact(facts: Sequence[FactTuple], store: TemplateStore, runner: ModelRunner,
                     popularity: PopularityProvider, probe: BiasProbe, config: RunConfig,
                     answers: Optional[Mapping[str, Set[str]]] = None) -> BuildResult:
    """
    Correct, bias-free, confident predictions for memorized subjects. The
    confidence count is taken over the templates that pass the bias and
    correctness filters.
    """
    answers = answers if answers is not None else answer_sets(facts)
    result = BuildResult()
    for relation_id, subject, gold in tqdm(_subjects_with_gold(facts, config.relations), desc="exact_fact"):
        views = views_or_zero(popularity, subject)
        if views <= config.popularity_threshold:
            result.rejections["unpopular_subject"] += 1
            continue
        sp = _SubjectProbe(runner, store, relation_id, subject, config.topk_confidence)
        for candidate in sp.candidates():
            hits = sp.hits(candidate)
            if not is_fact_completion(relation_id, hits[0][1], answers.get(relation_id, set())):
                result.rejections["trivial_prediction"] += 1
                continue
            if confidence_count(sp.topk, candidate) < config.confidence_threshold:
                result.rejections["not_confident"] += 1
                continue
            kept: List[Tuple[FactQuery, Prediction]] = []
            for query, prediction in hits:
                if probe.report(query, candidate).tags:
                    result.rejections["biased"] += 1
                    continue
                if not is_correct(prediction.token_text, gold, config.gold_prefix_min_length):
                    result.rejections["incorrect"] += 1
                    continue
                kept.append((query, prediction))
            if len(kept) < config.confidence_threshold:
                if kept:
                    result.rejections["not_confident_after_filter"] += 1
                continue
            for query, prediction in kept:
                result.samples.append(ScenarioSample(
                    scenario="exact_fact", prompt=query.prompt, subject=subject,
                    subject_char_span=query.subject_char_span, prediction=prediction,
                    relation_id=relation_id, template_id=query.template_id, gold=gold,
                    confidence_count=len(kept), popularity=views, template_topk=sp.texts(),
                ))
    log_event("build", "exact_fact", output_data={"samples": len(result.samples),
                                                  "rejections": dict(result.rejections)})
    return result


def _clean_title(title: str) -> str:
    return re.sub(r"\s*\([^)]*\)", "", title).strip()


def _strip_punct(word: str) -> str:
    return re.sub(r"^\W+|\W+$", "", word)


def generic_candidate(title: str, sentence: str) -> Tuple[Optional[Tuple[str, str, int]], Optional[str]]:
    """
    ((prompt, gold, subject_word_count), None) for a usable sentence, or
    (None, reason) explaining the discard.
    """
    words = sentence.split()
    if len(words) < GENERIC_MIN_WORDS:
        return None, "too_short"
    if sum(1 for w in words if w[:1].isupper()) > GENERIC_MAX_CAPITALS:
        return None, "too_many_capitals"
    title_words = set(_clean_title(title).split())
    n_subject = 0
    for w in words:
        if _strip_punct(w) in title_words and w == _strip_punct(w):
            n_subject += 1
        else:
            break
    if n_subject == 0:
        return None, "not_about_title"
    cut = min(GENERIC_MAX_WORDS, len(words) - 1)
    if n_subject >= cut:
        return None, "subject_fills_prompt"
    gold = _strip_punct(words[cut])
    if not gold or gold[0].isupper() or gold[0].isdigit():
        return None, "capital_or_digit_continuation"
    return (" ".join(words[:cut]), gold, n_subject), None


def build_generic(corpus: Sequence[CorpusEntry], n: int, runner: ModelRunner, seed: int) -> BuildResult:
    """One sentence per article, articles visited in seeded random order."""
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    result = BuildResult()
    for i in order:
        if len(result.samples) == n:
            break
        entry = corpus[i]
        for sentence in entry.sentences:
            candidate, reason = generic_candidate(entry.title, sentence)
            if candidate is None:
                result.rejections[reason] += 1
                continue
            prompt, gold, n_subject = candidate
            subject = " ".join(prompt.split()[:n_subject])
            prediction = runner.topk(prompt, 1)[0]
            result.samples.append(ScenarioSample(
                scenario="generic", prompt=prompt, subject=subject,
                subject_char_span=(0, len(subject)), prediction=prediction, gold=gold,
            ))
            break
    if len(result.samples) < n:
        raise CorpusExhaustedError(f"corpus yielded {len(result.samples)} usable sentences, {n} requested")
    log_event("build", "generic", output_data={"samples": len(result.samples),
                                               "rejections": dict(result.rejections)})
    return result


def check_disjoint(splits: Mapping[str, Sequence[ScenarioSample]]) -> None:
    owner: Dict[Tuple, str] = {}
    for scenario, samples in splits.items():
        for sample in samples:
            if sample.scenario == "generic":
                continue
            previous = owner.setdefault(sample.triple, scenario)
            if previous != scenario:
                raise DisjointnessError(f"{sample.triple} appears in both '{previous}' and '{scenario}'")


def assemble_dataset(splits: Mapping[str, Sequence[ScenarioSample]], mixture: Mapping[str, int],
                     seed: int) -> List[ScenarioSample]:
    """Seeded subsample of each split to the exact mixture counts, in scenario order."""
    check_disjoint(splits)
    rng = random.Random(seed)
    chosen: List[ScenarioSample] = []
    for scenario in SCENARIOS:
        count = mixture.get(scenario, 0)
        if count == 0:
            continue
        pool = list(splits.get(scenario, []))
        if count > len(pool):
            raise SplitTooSmallError(scenario, count, len(pool))
        picked = sorted(rng.sample(range(len(pool)), count))
        chosen.extend(pool[i] for i in picked)
    return chosen
