# scenarios/dataset_io.py

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from utils.persistence import atomic_write_text, dumps_stable, iter_jsonl

DATASET_FORMAT = "recall-dataset"
DATASET_VERSION = 1
FACT_COLUMNS = ["relation", "subject", "object"]


class MissingInputError(Exception):
    pass


@dataclass(frozen=True)
class FactTuple:
    relation_id: str
    subject: str
    object: str


@dataclass(frozen=True)
class CorpusEntry:
    title: str
    sentences: Tuple[str, ...]


@dataclass(frozen=True)
class TraceRow:
    """The fields a dataset row needs for tracing and auditing."""
    index: int
    prompt: str
    subject: Optional[str]
    subject_char_span: Optional[Tuple[int, int]]
    prediction: Optional[str]
    traced_token: Optional[int]
    scenario: Optional[str]
    relation_id: Optional[str]
    popularity: Optional[int]
    gold: Optional[str]


def load_fact_tuples(path: Path) -> List[FactTuple]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"fact file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter="\t")
        if reader.fieldnames != FACT_COLUMNS:
            raise MissingInputError(f"{path}: expected columns {FACT_COLUMNS}, got {reader.fieldnames}")
        return [FactTuple(r["relation"], r["subject"], r["object"]) for r in reader]


def fact_tuples_tsv(facts: Iterable[FactTuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(FACT_COLUMNS)
    for fact in facts:
        writer.writerow([fact.relation_id, fact.subject, fact.object])
    return buf.getvalue()


def write_fact_tuples(path: Path, facts: Iterable[FactTuple]) -> None:
    atomic_write_text(Path(path), fact_tuples_tsv(facts))


def load_corpus(path: Path) -> List[CorpusEntry]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"corpus file not found: {path}")
    return [CorpusEntry(r["title"], tuple(r["sentences"])) for r in iter_jsonl(path)]


def write_dataset(path: Path, header: dict, records: Iterable[dict]) -> None:
    lines = [dumps_stable({"header": header})] + [dumps_stable(r) for r in records]
    atomic_write_text(Path(path), "".join(line + "\n" for line in lines))


def read_dataset(path: Path) -> Tuple[Dict, List[Dict]]:
    """(header, records); a file without a header line yields an empty header."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"dataset not found: {path}")
    header: Dict = {}
    records: List[Dict] = []
    for i, obj in enumerate(iter_jsonl(path)):
        if i == 0 and set(obj) == {"header"}:
            header = obj["header"]
            continue
        records.append(obj)
    return header, records


def trace_row(index: int, record: Dict) -> TraceRow:
    span = record.get("subject_char_span")
    return TraceRow(
        index=index,
        prompt=record.get("prompt", ""),
        subject=record.get("subject"),
        subject_char_span=tuple(span) if span else None,
        prediction=record.get("prediction"),
        traced_token=record.get("traced_token"),
        scenario=record.get("scenario"),
        relation_id=record.get("relation_id"),
        popularity=record.get("popularity"),
        gold=record.get("gold"),
    )
