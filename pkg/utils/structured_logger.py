# utils/structured_logger.py

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import core.paths as paths

_lock = threading.Lock()

MAX_LOG_BYTES = 5 * 1024 * 1024


def _log_file() -> Path:
    # resolved per call so tests can repoint core.paths at a temp dir
    return Path(paths.STRUCT_LOG_FILE)


def _rotate_if_needed(log_path: Path):
    """
    If the log exceeds 5MB, move it into the archive dir (timestamped)
    and start a fresh empty log file.
    """
    archive_dir = Path(paths.STRUCT_LOG_ARCHIVE)
    if log_path.exists() and log_path.stat().st_size > MAX_LOG_BYTES:
        archive_dir.mkdir(parents=True, exist_ok=True)
        ts = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        archived = archive_dir / f"structured_runs_{ts}.ndjson"
        log_path.rename(archived)
        log_path.write_text("", encoding="utf-8")


def log_event(
    run_id: str,
    step: str,
    input_data=None,
    output_data=None,
    outcome: str = "ok",
    extra: Optional[dict] = None
):
    """
    Append a single NDJSON line to the structured log.
    Auto-creates parent directories and rotates if too large.
    Outcome is one of "ok", "warning" or "error".
    """
    log_path = _log_file()
    log_path.parent.mkdir(parents=True, exist_ok=True)

    entry = {
        "run_id": run_id,
        "step": step,
        "input": input_data,
        "output": output_data,
        "outcome": outcome,
        "extra": extra or {},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    line = json.dumps(entry, ensure_ascii=False, default=str)

    with _lock:
        _rotate_if_needed(log_path)
        with open(log_path, "a", encoding="utf-8") as f:
            f.write(line + "\n")


def read_events(run_id: Optional[str] = None) -> List[dict]:
    """
    Read all JSON lines from the log, optionally only those of one run.
    """
    log_path = _log_file()
    if not log_path.exists():
        return []
    lines = log_path.read_text(encoding="utf-8").splitlines()
    events = [json.loads(line) for line in lines if line.strip()]
    if run_id is not None:
        events = [e for e in events if e.get("run_id") == run_id]
    return events
