"""Append-only JSON-lines ledger plus small JSON helpers.

Every record carries ``ts`` (UTC, ISO-8601) and ``kind``; the rest are
free-form fields. Progress text for humans goes to stderr via ``say``.
"""
from __future__ import annotations
from pathlib import Path
import json, sys, threading, time

_lock = threading.Lock()
_path: Path | None = None
_configured = False


def _ts() -> str:
    return time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())


def configure(path: str | Path | None) -> None:
    """Point the ledger at ``path``; ``None`` disables it."""
    global _path, _configured
    _path = Path(path) if path else None
    _configured = True


def current_path() -> Path | None:
    if not _configured:
        from .config import Settings
        configure(Settings().ledger_path())
    return _path


def log(kind: str, **fields) -> None:
    path = current_path()
    if path is None:
        return
    rec = {'ts': _ts(), 'kind': kind}
    rec.update(fields)
    line = json.dumps(rec, ensure_ascii=False, default=str) + '\n'
    with _lock:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'a', encoding='utf-8') as f:
            f.write(line)


def say(stage: str, message: str) -> None:
    print(f'[{stage}] {message}', file=sys.stderr)


def save_json(path: str | Path, obj) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(obj, ensure_ascii=False, indent=2), encoding='utf-8')


def load_json(path: str | Path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
