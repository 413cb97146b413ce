# diagnostics/criteria.py

import re
from dataclasses import dataclass
from typing import Collection, Literal, Mapping, Optional, Sequence

from core.config_schema import SUPPORTED_RELATIONS
from diagnostics.relations import InsufficientTemplatesError, UnknownRelationError
from engine.runner import Prediction

MIN_TEMPLATES = 5
CONCEPT_RELATIONS = {"P101"}


def is_fact_completion(relation_id: str, prediction: Prediction, answer_set: Collection[str]) -> bool:
    """
    Non-trivial predictions only. P101 objects are concepts, so they must
    match a known object label; the other relations take named entities
    that start with a capital letter and answer at least one known fact.
    """
    if relation_id not in SUPPORTED_RELATIONS:
        raise UnknownRelationError(f"unsupported relation '{relation_id}'")
    text = prediction.token_text.strip()
    if not text:
        return False
    if relation_id in CONCEPT_RELATIONS:
        return text in answer_set
    return text[0].isupper() and text in answer_set


def confidence_count(per_template_topk: Mapping[int, Sequence[Prediction]], candidate: str,
                     min_templates: int = MIN_TEMPLATES) -> int:
    """Number of templates whose top-k holds the candidate (exact match after trimming)."""
    if len(per_template_topk) < min_templates:
        raise InsufficientTemplatesError(
            f"confidence needs at least {min_templates} templates, got {len(per_template_topk)}"
        )
    target = candidate.strip()
    return sum(
        1 for preds in per_template_topk.values()
        if any(p.token_text.strip() == target for p in preds)
    )


def lexical_overlap(subject: str, prediction: str, min_fragment: int = 3) -> bool:
    """
    Case-sensitive overlap at word-fragment level: the prediction sits inside
    a subject fragment, or a fragment sits inside the prediction.
    """
    pred = prediction.strip()
    fragments = [f for f in re.split(r"[\W_]+", subject) if f]
    if not pred or not fragments:
        return False
    for fragment in fragments:
        if len(pred) >= min_fragment and pred in fragment:
            return True
        if len(fragment) >= min_fragment and fragment in pred:
            return True
    return False


def is_correct(prediction: str, gold: str, min_prefix_length: int = 3) -> bool:
    """
    Exact match, or a prefix of the gold label. The length rule counts the
    token as emitted, leading space included (" Bed" is 4 characters), while
    the prefix match uses the stripped text.
    """
    pred, gold = prediction.strip(), gold.strip()
    if not pred:
        return False
    if pred == gold:
        return True
    return len(prediction.rstrip()) > min_prefix_length and gold.startswith(pred)


@dataclass(frozen=True)
class HeuristicsVerdict:
    kind: Literal["none", "single", "multiple"]
    tag: Optional[str] = None
    eligible: bool = False


def heuristics_verdict(overlap: bool, name_flag: bool, prompt_flag: bool, memorized: bool) -> HeuristicsVerdict:
    """single(kind) iff exactly one cue fired; heuristics recall also needs an unmemorized subject."""
    tags = [tag for tag, flag in (("lexical", overlap), ("name", name_flag), ("prompt", prompt_flag)) if flag]
    if not tags:
        return HeuristicsVerdict("none")
    if len(tags) > 1:
        return HeuristicsVerdict("multiple")
    return HeuristicsVerdict("single", tags[0], eligible=not memorized)
