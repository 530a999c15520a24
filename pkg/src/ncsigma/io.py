"""Persistence: atomic writes, content hashes and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

from .algebra import TwistedSeries
from .errors import InputError, ParameterError


def atomic_write(path: str | os.PathLike, data: str | bytes) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj: Any) -> str:
    """Deterministic JSON: fixed key order as given, full float precision."""
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def save_series(path: str | os.PathLike, a: TwistedSeries) -> Path:
    return atomic_write(path, a.to_json() + "\n")


def load_series(path: str | os.PathLike) -> TwistedSeries:
    """Read a twisted-series file; malformed content raises :class:`InputError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return TwistedSeries.from_json(text)
    except (ParameterError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed series file {path}: {exc}") from exc


def write_manifest(out: str | os.PathLike, files: list[str | os.PathLike], **fields: Any) -> Path:
    """``manifest.json`` listing every data file with its sha256 digest."""
    out = Path(out)
    entries = []
    for f in files:
        f = Path(f)
        entries.append({"path": str(f.relative_to(out)), "sha256": sha256_file(f),
                        "bytes": f.stat().st_size})
    manifest = {**fields, "files": entries}
    return atomic_write(out / "manifest.json", dump_json(manifest))


def check_manifest(out: str | os.PathLike) -> list[str]:
    """Paths whose current digest differs from the manifest (empty when intact)."""
    out = Path(out)
    m = json.loads((out / "manifest.json").read_text())
    return [e["path"] for e in m["files"] if sha256_file(out / e["path"]) != e["sha256"]]
