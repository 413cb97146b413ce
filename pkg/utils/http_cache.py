# utils/http_cache.py

import hashlib
import json
import threading
from pathlib import Path
from typing import Optional

import requests

import core.paths as paths
from utils.persistence import atomic_write_text

USER_AGENT = "recall-tracer/1.0 (dataset construction; contact via repository)"


class HttpLookupError(Exception):
    """Raised when an external lookup fails and no cached answer exists."""
    pass


class CachedJsonClient:
    """
    GET-only JSON client with an on-disk response cache.

    Responses are stored as one JSON file per request, keyed by a hash of the
    URL and sorted query parameters, so repeated runs never hit the network
    for a lookup they already made.
    """

    def __init__(self, cache_dir: Optional[Path] = None, timeout: float = 10.0,
                 session: Optional[requests.Session] = None):
        self.cache_dir = Path(cache_dir) if cache_dir else Path(paths.HTTP_CACHE_DIR)
        self.timeout = timeout
        self.session = session or requests.Session()
        self.session.headers.setdefault("User-Agent", USER_AGENT)
        self._lock = threading.Lock()

    def _key(self, url: str, params: Optional[dict]) -> Path:
        raw = url + "?" + json.dumps(params or {}, sort_keys=True)
        digest = hashlib.sha256(raw.encode("utf-8")).hexdigest()
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def get_json(self, url: str, params: Optional[dict] = None) -> Optional[dict]:
        """
        Return the decoded JSON body, or None for a 404.
        Other HTTP failures raise HttpLookupError.
        """
        cache_file = self._key(url, params)
        if cache_file.exists():
            cached = json.loads(cache_file.read_text(encoding="utf-8"))
            return cached.get("body")

        try:
            response = self.session.get(url, params=params, timeout=self.timeout)
        except requests.RequestException as e:
            raise HttpLookupError(f"GET {url} failed: {e}") from e

        if response.status_code == 404:
            body = None
        elif response.status_code == 200:
            body = response.json()
        else:
            raise HttpLookupError(f"GET {url} returned HTTP {response.status_code}")

        with self._lock:
            atomic_write_text(cache_file, json.dumps({"url": url, "params": params, "body": body}))
        return body
