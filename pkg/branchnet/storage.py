import json
import logging
import os
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


def _backup_path(path: Path) -> Path:
    return path.with_name(path.name + ".backup")


def write_text(path, text: str) -> Path:
    """Write text, keeping the previous file as a backup until the write succeeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    backup = _backup_path(path)

    if path.exists():
        os.replace(path, backup)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except Exception as e:
        logger.error(f"Error writing {path}: {e}")
        if backup.exists():
            os.replace(backup, path)
        raise

    if backup.exists():
        os.remove(backup)
    return path


def write_json(path, payload: Any) -> Path:
    # sort_keys keeps seeded outputs byte-identical between runs
    return write_text(path, json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def read_json(path) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
