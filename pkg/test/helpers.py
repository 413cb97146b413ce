import re
from typing import List, Sequence, Tuple

from diagnostics.relations import FactQuery
from engine.runner import Prediction

FILLERS = ["the", "a", "its", "an", "one", "that", "this", "his", "her", "their", "which", "some"]


class PatternRunner:
    """
    Stands in for a model: topk(prompt, k) returns the tokens of the first
    rule whose regex matches the prompt, padded with filler words.
      rules: list of (regex_pattern, [token, ...])
    """

    def __init__(self, rules: Sequence[Tuple[str, Sequence[str]]], fillers: Sequence[str] = FILLERS):
        self.rules = [(re.compile(p), list(tokens)) for p, tokens in rules]
        self.fillers = list(fillers)
        self.calls: List[str] = []

    def topk(self, prompt: str, k: int) -> List[Prediction]:
        self.calls.append(prompt)
        ranked: List[str] = []
        for pat, tokens in self.rules:
            if pat.search(prompt):
                ranked = list(tokens)
                break
        for filler in self.fillers:
            if len(ranked) >= k:
                break
            if filler not in ranked:
                ranked.append(filler)
        return [Prediction(token_text=t, rank=i + 1, probability=1.0 / (i + 2)) for i, t in enumerate(ranked[:k])]


def make_query(prompt: str, subject: str, relation_id: str = "P495", template_id: int = 0) -> FactQuery:
    start = prompt.index(subject)
    return FactQuery(relation_id=relation_id, template_id=template_id, subject=subject, prompt=prompt,
                     subject_char_span=(start, start + len(subject)))


def print_header(title: str):
    print(f"\n---- {title} ----\n")
