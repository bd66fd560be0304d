"""Serialization helpers: canonical JSON, atomic writes, JSONL with a metadata header."""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

from latwar import __version__

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

META_KEY = "_meta"


def canonical(obj: Any) -> Any:
    """Return a copy of ``obj`` with every mapping's keys sorted, recursively.

    Tuples become lists so the result round-trips through JSON unchanged.
    """
    if isinstance(obj, dict):
        return {str(k): canonical(obj[k]) for k in sorted(obj, key=str)}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def config_hash(config: Any) -> str:
    return sha256_hex(canonical_json(config))


def make_meta(config: Any = None, seed: int | None = None, **extra) -> dict:
    meta = {"version": __version__, "config_hash": config_hash(config), "seed": seed}
    meta.update(extra)
    return meta


def atomic_write_bytes(path: str | Path, data: bytes, durable: bool = True) -> None:
    """Write-temp-then-rename so readers never observe a partial file.

    ``durable=False`` skips the fsync; the rename is still atomic.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            if durable:
                fh.flush()
                os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dump_jsonl(records: Iterable[dict], meta: dict | None = None) -> str:
    lines = []
    if meta is not None:
        lines.append(canonical_json({META_KEY: meta}))
    lines.extend(canonical_json(r) for r in records)
    return "".join(line + "\n" for line in lines)


def write_jsonl(path: str | Path, records: Iterable[dict], meta: dict | None = None) -> None:
    atomic_write_text(path, dump_jsonl(records, meta))


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    """Yield records, skipping blank lines and the metadata header."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if META_KEY in rec:
                continue
            yield rec


def read_jsonl_meta(path: str | Path) -> dict | None:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                return rec.get(META_KEY)
    return None


def load_config(path: str | Path) -> dict:
    """Load a JSON or TOML config by file extension."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    return read_json(path)
