# audit/importers.py

import json
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from audit.audit import AuditInputError, AuditRow
from scenarios.dataset_io import CorpusEntry, FactTuple

TITLE_LINE = re.compile(r"^\s*=\s+([^=].*?)\s+=\s*$")
SECTION_LINE = re.compile(r"^\s*=\s*=")
SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+(?=\S)")


def import_lama_facts(path: Path) -> List[FactTuple]:
    """LAMA/T-REx JSONL (sub_label, obj_label, predicate_id) to fact tuples, duplicates dropped."""
    facts: Dict[Tuple[str, str, str], None] = {}
    with open(path, "r", encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                key = (raw["predicate_id"], raw["sub_label"].strip(), raw["obj_label"].strip())
            except (json.JSONDecodeError, KeyError, AttributeError) as e:
                raise AuditInputError(f"{path}:{n}: not a LAMA record ({e})") from e
            facts.setdefault(key, None)
    return [FactTuple(rel, subj, obj) for rel, subj, obj in facts]


def import_corpus_text(path: Path) -> List[CorpusEntry]:
    """
    Plain-text dump with "= Title =" article headings; deeper "= = Section = ="
    headings are skipped, prose lines are split into sentences.
    """
    entries: List[CorpusEntry] = []
    title: Optional[str] = None
    sentences: List[str] = []

    def flush():
        if title is not None and sentences:
            entries.append(CorpusEntry(title, tuple(sentences)))

    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if SECTION_LINE.match(line):
            continue
        heading = TITLE_LINE.match(line)
        if heading:
            flush()
            title, sentences = heading.group(1).strip(), []
            continue
        if title is None or not line.strip():
            continue
        sentences.extend(s.strip() for s in SENTENCE_SPLIT.split(line.strip()) if s.strip())
    flush()
    return entries


def _subject_span(prompt: str, subject: Optional[str]) -> Optional[Tuple[int, int]]:
    if not subject:
        return None
    start = prompt.find(subject)
    if start < 0:
        return None
    return start, start + len(subject)


def _counterfact_row(index: int, raw: dict) -> AuditRow:
    if "requested_rewrite" in raw:
        rewrite = raw["requested_rewrite"]
        subject = rewrite.get("subject")
        prompt = rewrite.get("prompt", "").replace("{}", subject or "")
        attribute = (rewrite.get("target_true") or {}).get("str")
        relation_id = rewrite.get("relation_id")
    else:
        subject = raw.get("subject")
        prompt = raw.get("prompt", "")
        attribute = raw.get("attribute")
        relation_id = raw.get("relation_id")
    if not prompt:
        raise AuditInputError(f"record {index} has no prompt")
    return AuditRow(
        index=index,
        prompt=prompt,
        subject=subject,
        subject_char_span=_subject_span(prompt, subject),
        prediction=raw.get("prediction"),
        relation_id=relation_id,
        popularity=raw.get("popularity"),
        gold=attribute,
    )


def load_counterfact(path: Path) -> List[AuditRow]:
    """CounterFact-shaped records, as a JSON array or as JSON lines."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        records = json.loads(text)
    else:
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [_counterfact_row(i, r) for i, r in enumerate(records)]


def rows_from_dataset(records: Sequence[dict]) -> List[AuditRow]:
    rows = []
    for i, r in enumerate(records):
        span = r.get("subject_char_span")
        rows.append(AuditRow(
            index=i,
            prompt=r.get("prompt", ""),
            subject=r.get("subject"),
            subject_char_span=tuple(span) if span else None,
            prediction=r.get("prediction"),
            relation_id=r.get("relation_id"),
            popularity=r.get("popularity"),
            gold=r.get("gold"),
            traced_token=r.get("traced_token"),
        ))
    return rows
