# diagnostics/popularity.py

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Protocol
from urllib.parse import quote

import core.paths as paths
from utils.http_cache import CachedJsonClient
from utils.structured_logger import log_event


@dataclass(frozen=True)
class PopularityRecord:
    subject: str
    views: int

    def __post_init__(self):
        if self.views < 0:
            raise ValueError(f"negative view count for '{self.subject}'")


class PopularityProvider(Protocol):
    def lookup(self, subject: str) -> Optional[PopularityRecord]: ...


class TsvPopularity:
    """subject<TAB>views, one subject per line, optional header."""

    def __init__(self, views: Dict[str, int]):
        self._views = dict(views)

    @classmethod
    def load(cls, path: Path) -> "TsvPopularity":
        views: Dict[str, int] = {}
        with open(path, "r", encoding="utf-8", newline="") as f:
            for row in csv.reader(f, delimiter="\t"):
                if not row or row[0] == "subject":
                    continue
                views[row[0]] = int(row[1])
        return cls(views)

    def lookup(self, subject: str) -> Optional[PopularityRecord]:
        if subject not in self._views:
            return None
        return PopularityRecord(subject, self._views[subject])


class PageviewPopularity:
    """
    Monthly page views from a Wikimedia-style per-article endpoint,
    averaged over one calendar year and rounded down.
    """

    def __init__(self, client: Optional[CachedJsonClient] = None, base_url: Optional[str] = None,
                 year: int = 2019, project: str = "en.wikipedia"):
        self.client = client or CachedJsonClient()
        self.base_url = (base_url or paths.PAGEVIEWS_URL).rstrip("/")
        self.year = year
        self.project = project

    def url_for(self, subject: str) -> str:
        article = quote(subject.replace(" ", "_"), safe="")
        return (f"{self.base_url}/{self.project}/all-access/user/{article}/monthly/"
                f"{self.year}010100/{self.year}123100")

    def lookup(self, subject: str) -> Optional[PopularityRecord]:
        body = self.client.get_json(self.url_for(subject))
        if not body or not body.get("items"):
            return None
        monthly = [int(item.get("views", 0)) for item in body["items"]]
        return PopularityRecord(subject, sum(monthly) // len(monthly))


def is_memorized(record: Optional[PopularityRecord], threshold: int = 1000, subject: str = "") -> bool:
    """views > threshold; a missing record counts as 0 views."""
    if record is None:
        log_event("diagnostics", "popularity_missing", input_data={"subject": subject},
                  output_data={"views": 0}, outcome="warning")
        return False
    return record.views > threshold


def views_or_zero(provider: PopularityProvider, subject: str) -> int:
    record = provider.lookup(subject)
    if record is None:
        log_event("diagnostics", "popularity_missing", input_data={"subject": subject},
                  output_data={"views": 0}, outcome="warning")
        return 0
    return record.views
