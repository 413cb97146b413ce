# diagnostics/relations.py

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from core.paths import SUBSTITUTIONS_PATH, TEMPLATES_PATH

# P101 templates that put the subject mid-sentence
NON_SUBJECT_FIRST = {
    "The expertise of [X] is [Y]",
    "The domain of activity of [X] is [Y]",
    "The domain of work of [X] is [Y]",
}


class UnknownRelationError(Exception):
    pass


class InsufficientTemplatesError(Exception):
    pass


@dataclass(frozen=True)
class FactQuery:
    relation_id: str
    template_id: int
    subject: str
    prompt: str
    subject_char_span: Tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "relation_id": self.relation_id,
            "template_id": self.template_id,
            "subject": self.subject,
            "prompt": self.prompt,
            "subject_char_span": list(self.subject_char_span),
        }


@dataclass(frozen=True)
class RelationTemplate:
    relation_id: str
    template_id: int
    template: str

    @property
    def subject_first(self) -> bool:
        return self.template.startswith("[X]") and self.template not in NON_SUBJECT_FIRST

    def instantiate(self, subject: str) -> FactQuery:
        """[X] := subject, cut before [Y], trailing whitespace dropped."""
        head = self.template.split("[Y]", 1)[0]
        start = head.index("[X]")
        prompt = head.replace("[X]", subject, 1).rstrip()
        return FactQuery(
            relation_id=self.relation_id,
            template_id=self.template_id,
            subject=subject,
            prompt=prompt,
            subject_char_span=(start, start + len(subject)),
        )


class TemplateStore:
    """Subject-first relation templates keyed by relation id."""

    def __init__(self, templates: Iterable[RelationTemplate]):
        self._by_relation: Dict[str, List[RelationTemplate]] = {}
        for t in templates:
            if t.subject_first:
                self._by_relation.setdefault(t.relation_id, []).append(t)

    @classmethod
    def load(cls, path: Path = TEMPLATES_PATH, relations: Optional[Iterable[str]] = None) -> "TemplateStore":
        wanted = set(relations) if relations is not None else None
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f, delimiter="\t"))
        return cls(
            RelationTemplate(r["relation_id"], int(r["template_id"]), r["template"])
            for r in rows
            if wanted is None or r["relation_id"] in wanted
        )

    @property
    def relations(self) -> List[str]:
        return list(self._by_relation)

    def for_relation(self, relation_id: str) -> List[RelationTemplate]:
        if relation_id not in self._by_relation:
            raise UnknownRelationError(f"no templates for relation '{relation_id}'")
        return list(self._by_relation[relation_id])

    def get(self, relation_id: str, template_id: int) -> RelationTemplate:
        for t in self.for_relation(relation_id):
            if t.template_id == template_id:
                return t
        raise UnknownRelationError(f"relation '{relation_id}' has no template {template_id}")

    def queries(self, relation_id: str, subject: str) -> List[FactQuery]:
        return [t.instantiate(subject) for t in self.for_relation(relation_id)]

    def words(self, relation_id: str) -> List[str]:
        """Every word and punctuation mark the relation's templates use, in first-seen order."""
        seen: Dict[str, None] = {}
        for t in self.for_relation(relation_id):
            text = t.template.replace("[X]", " ").replace("[Y]", " ")
            for w in re.findall(r"\w+|[^\w\s]", text):
                seen.setdefault(w, None)
        return list(seen)


@dataclass(frozen=True)
class SubstitutionTable:
    by_relation: Dict[str, List[str]]
    default: List[str]
    name_bias_relations: List[str]
    name_bias_relations_external: List[str]
    name_probes: List[str]
    grammar_fixes: List[Tuple[str, str]]

    @classmethod
    def load(cls, path: Path = SUBSTITUTIONS_PATH) -> "SubstitutionTable":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            by_relation={k: list(v) for k, v in raw["relations"].items()},
            default=list(raw["default"]),
            name_bias_relations=list(raw["name_bias_relations"]),
            name_bias_relations_external=list(raw["name_bias_relations_external"]),
            name_probes=list(raw["name_probes"]),
            grammar_fixes=[tuple(pair) for pair in raw["grammar_fixes"]],
        )

    def substitutes(self, relation_id: str, strict: bool = True) -> List[str]:
        if relation_id in self.by_relation:
            return list(self.by_relation[relation_id])
        if strict:
            raise UnknownRelationError(f"no prompt substitutions for relation '{relation_id}'")
        return list(self.default)

    def name_bias_applies(self, relation_id: str, external: bool = False) -> bool:
        pool = self.name_bias_relations_external if external else self.name_bias_relations
        return relation_id in pool

    def probe_prompts(self, subject: str) -> List[str]:
        return [p.replace("[X]", subject) for p in self.name_probes]

    def _fix_grammar(self, text: str) -> str:
        for before, after in self.grammar_fixes:
            text = re.sub(rf"\b{re.escape(before)}", after, text)
            lower_before = before[0].lower() + before[1:]
            lower_after = after[0].lower() + after[1:]
            text = re.sub(rf"\b{re.escape(lower_before)}", lower_after, text)
        return text

    def substituted_prompts(self, prompt: str, subject_char_span: Tuple[int, int],
                            relation_id: str, strict: bool = True) -> List[str]:
        """The prompt with the subject replaced by each generic substitute, grammar and capitals fixed."""
        a, b = subject_char_span
        out = []
        for sub in self.substitutes(relation_id, strict=strict):
            word = sub if a == 0 else sub[0].lower() + sub[1:]
            text = self._fix_grammar(prompt[:a] + word + prompt[b:])
            out.append(text[:1].upper() + text[1:])
        return out
