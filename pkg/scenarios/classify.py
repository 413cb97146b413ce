# scenarios/classify.py

from typing import Optional, Sequence

UNCLASSIFIED = "unclassified"


def classify(fact_completion: bool, confidence: Optional[int], popularity: Optional[int],
             bias_tags: Sequence[str], correct: Optional[bool], confidence_threshold: int = 5,
             popularity_threshold: int = 1000) -> str:
    """
    Decision tree over the three criteria:
      no fact completion                          -> generic
      in one paraphrase only, not memorized       -> guesswork
      confident, memorized, bias-free, correct    -> exact_fact
      confident, not memorized, exactly one cue   -> heuristics
    Anything else is left unclassified.
    """
    if not fact_completion:
        return "generic"
    memorized = popularity is not None and popularity > popularity_threshold
    conf = confidence or 0
    if conf == 1 and not memorized:
        return "guesswork"
    if conf >= confidence_threshold:
        if memorized and not bias_tags and correct:
            return "exact_fact"
        if not memorized and len(bias_tags) == 1:
            return "heuristics"
    return UNCLASSIFIED
