"""Atomic file writing and JSON helpers.

Every artifact the pipeline emits goes through a temp-then-rename write so
an interrupted run never leaves a partial file, and reruns with identical
inputs produce byte-identical outputs (no timestamps, repr-exact floats).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .errors import IOFailure


def write_bytes_atomic(path: Path | str, data: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def write_text_atomic(path: Path | str, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def dumps_json(obj: object) -> str:
    # repr-exact floats and stable key order make reruns byte-identical
    return json.dumps(obj, indent=2, allow_nan=False, sort_keys=False) + "\n"


def write_json_atomic(path: Path | str, obj: object) -> None:
    write_text_atomic(path, dumps_json(obj))


def read_json(path: Path | str) -> object:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
