import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).parent.parent.resolve()
sys.path.insert(0, str(PROJECT_ROOT))

import core.paths as paths


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path_factory, monkeypatch):
    """Keep structured logs and the HTTP cache out of the real data/ directory."""
    # Own temp dir, so tests that walk tmp_path don't pick up these files
    tmp_path = tmp_path_factory.mktemp("isolated")
    log_dir = tmp_path / "logs"
    monkeypatch.setattr(paths, "STRUCT_LOG_DIR", log_dir)
    monkeypatch.setattr(paths, "STRUCT_LOG_FILE", log_dir / "structured_runs.ndjson")
    monkeypatch.setattr(paths, "STRUCT_LOG_ARCHIVE", log_dir / "archive")
    monkeypatch.setattr(paths, "HTTP_CACHE_DIR", tmp_path / "http_cache")
    return log_dir
