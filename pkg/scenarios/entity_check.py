# scenarios/entity_check.py

from pathlib import Path
from typing import Iterable, Optional, Protocol

import core.paths as paths
from utils.http_cache import CachedJsonClient


class EntityChecker(Protocol):
    def exists(self, label: str) -> bool: ...


class LabelSetChecker:
    """Exact label match against an in-memory set (one label per line when loaded from file)."""

    def __init__(self, labels: Iterable[str]):
        self.labels = {label.strip() for label in labels if label.strip()}

    @classmethod
    def load(cls, path: Path) -> "LabelSetChecker":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def exists(self, label: str) -> bool:
        return label in self.labels


class WikidataChecker:
    """Label search against a Wikidata-style wbsearchentities endpoint; exact label match only."""

    def __init__(self, client: Optional[CachedJsonClient] = None, base_url: Optional[str] = None,
                 language: str = "en"):
        self.client = client or CachedJsonClient()
        self.base_url = base_url or paths.WIKIDATA_URL
        self.language = language

    def exists(self, label: str) -> bool:
        body = self.client.get_json(self.base_url, params={
            "action": "wbsearchentities",
            "search": label,
            "language": self.language,
            "type": "item",
            "limit": 50,
            "format": "json",
        })
        for hit in (body or {}).get("search", []):
            if hit.get("label") == label:
                return True
            if (hit.get("match") or {}).get("text") == label:
                return True
        return False
