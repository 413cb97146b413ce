# diagnostics/bias_probes.py

import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from diagnostics.criteria import lexical_overlap
from diagnostics.relations import FactQuery, SubstitutionTable
from engine.runner import ModelRunner, Prediction


class ModelFailureError(Exception):
    pass


@dataclass(frozen=True)
class BiasReport:
    lexical_overlap: bool
    name_bias: bool
    prompt_bias: bool
    evidence: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def tags(self) -> List[str]:
        return [t for t, f in (("lexical", self.lexical_overlap), ("name", self.name_bias),
                               ("prompt", self.prompt_bias)) if f]


def _safe_topk(runner: ModelRunner, prompt: str, k: int) -> List[Prediction]:
    try:
        return runner.topk(prompt, k)
    except Exception as e:
        raise ModelFailureError(f"model failed on probe '{prompt}': {e}") from e


def _find(preds: List[Prediction], text: str) -> Optional[Prediction]:
    target = text.strip()
    for p in preds:
        if p.token_text.strip() == target:
            return p
    return None


class BiasProbe:
    """
    Runs the name and prompt probes against one model. Name probes depend on
    the subject only, so their results are cached per subject.
    """

    def __init__(self, runner: ModelRunner, substitutions: SubstitutionTable, topk: int = 10,
                 min_fragment: int = 3):
        self.runner = runner
        self.substitutions = substitutions
        self.topk = topk
        self.min_fragment = min_fragment
        self._name_cache: Dict[str, List[Tuple[str, List[Prediction]]]] = {}
        self._lock = threading.Lock()

    def name_probe_predictions(self, subject: str) -> List[Tuple[str, List[Prediction]]]:
        with self._lock:
            cached = self._name_cache.get(subject)
        if cached is not None:
            return cached
        result = [(p, _safe_topk(self.runner, p, self.topk)) for p in self.substitutions.probe_prompts(subject)]
        with self._lock:
            self._name_cache.setdefault(subject, result)
        return result

    def name_bias(self, subject: str, prediction: str) -> Tuple[bool, List[str]]:
        evidence = []
        for probe, preds in self.name_probe_predictions(subject):
            hit = _find(preds, prediction)
            if hit is not None:
                evidence.append(f"name: '{probe}' -> {hit.token_text} (rank {hit.rank})")
        return bool(evidence), evidence

    def prompt_bias(self, query: FactQuery, prediction: str, strict: bool = True) -> Tuple[bool, List[str]]:
        evidence = []
        prompts = self.substitutions.substituted_prompts(
            query.prompt, query.subject_char_span, query.relation_id, strict=strict
        )
        for prompt in prompts:
            hit = _find(_safe_topk(self.runner, prompt, self.topk), prediction)
            if hit is not None:
                evidence.append(f"prompt: '{prompt}' -> {hit.token_text} (rank {hit.rank})")
        return bool(evidence), evidence

    def report(self, query: FactQuery, prediction: str, external: bool = False) -> BiasReport:
        """
        All applicable filters for one (query, prediction). External data may
        use relations outside the template table, so substitutions fall back
        to the default list there.
        """
        evidence: List[str] = []
        overlap = lexical_overlap(query.subject, prediction, self.min_fragment)
        if overlap:
            evidence.append(f"lexical: '{prediction.strip()}' ~ '{query.subject}'")
        name_flag = False
        if self.substitutions.name_bias_applies(query.relation_id, external=external):
            name_flag, found = self.name_bias(query.subject, prediction)
            evidence += found
        prompt_flag, found = self.prompt_bias(query, prediction, strict=not external)
        evidence += found
        return BiasReport(overlap, name_flag, prompt_flag, tuple(evidence))


def name_bias(runner: ModelRunner, subject: str, prediction: str, substitutions: SubstitutionTable,
              topk: int = 10) -> bool:
    return BiasProbe(runner, substitutions, topk).name_bias(subject, prediction)[0]


def prompt_bias(runner: ModelRunner, query: FactQuery, prediction: Prediction, substitutions: SubstitutionTable,
                topk: int = 10) -> bool:
    return BiasProbe(runner, substitutions, topk).prompt_bias(query, prediction.token_text)[0]
