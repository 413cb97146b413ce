# core/paths.py

import os
from pathlib import Path

# Repository root (config/ and the shipped relation data live under it)
PROJECT_ROOT = Path(__file__).parent.parent.resolve()

# Base directory for logs and other run-local state, overridable in tests
BASE_DATA_DIR = Path(os.getenv("DATA_DIR", "data"))

# Shipped configuration and relation data
CONFIG_DIR = PROJECT_ROOT / "config"
DEFAULT_CONFIG_PATH = CONFIG_DIR / "default_config.json"
RELATIONS_DIR = CONFIG_DIR / "relations"
TEMPLATES_PATH = RELATIONS_DIR / "pararel_templates.tsv"
SUBSTITUTIONS_PATH = RELATIONS_DIR / "prompt_substitutions.json"

# Structured logging NDJSON file + archive dir
STRUCT_LOG_DIR     = BASE_DATA_DIR / "logs"
STRUCT_LOG_FILE    = STRUCT_LOG_DIR / "structured_runs.ndjson"
STRUCT_LOG_ARCHIVE = STRUCT_LOG_DIR / "archive"

# On-disk cache for HTTP lookups (pageviews, entity labels)
HTTP_CACHE_DIR = Path(os.getenv("RECALL_CACHE_DIR", str(BASE_DATA_DIR / "http_cache")))

# External service endpoints
PAGEVIEWS_URL = os.getenv(
    "RECALL_PAGEVIEWS_URL",
    "https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article",
)
WIKIDATA_URL = os.getenv("RECALL_WIKIDATA_URL", "https://www.wikidata.org/w/api.php")
