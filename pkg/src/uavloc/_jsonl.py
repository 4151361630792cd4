"""Line-delimited JSON helpers with a leading header record."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterator

from . import __version__
from .errors import DataError


def dumps(obj: Any) -> str:
    # Key order is the caller's insertion order; never sort, field order is fixed by format.
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "), allow_nan=False)


def header(fmt: str, **config: Any) -> dict[str, Any]:
    return {"format": fmt, "version": __version__, "config": config}


def write_lines(path: str | Path, head: dict[str, Any], rows: list[str]) -> None:
    text = dumps(head) + "\n" + "".join(r + "\n" for r in rows)
    Path(path).write_bytes(text.encode("utf-8"))


def read_lines(path: str | Path, fmt: str) -> tuple[dict[str, Any], Iterator[tuple[int, dict[str, Any]]]]:
    """Return the header and an iterator of ``(line_number, record)``."""
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 ({exc})") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError(f"{path}: empty file, missing header")
    head = _parse(path, 1, lines[0])
    if head.get("format") != fmt:
        raise DataError(f"{path}:1: expected format {fmt!r}, got {head.get('format')!r}")

    def records() -> Iterator[tuple[int, dict[str, Any]]]:
        for lineno, line in enumerate(lines[1:], start=2):
            yield lineno, _parse(path, lineno, line)

    return head, records()


def _parse(path: str | Path, lineno: int, line: str) -> dict[str, Any]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{lineno}: parse error: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DataError(f"{path}:{lineno}: expected an object")
    return obj
