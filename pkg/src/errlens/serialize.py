"""Canonical JSON output.

All JSON artifacts are written with sorted keys, two-space indent, a trailing
newline, and shortest-round-trip float formatting, so identical in-memory
values always produce byte-identical files.
"""

from __future__ import annotations

import json


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False,
                      ensure_ascii=False) + "\n"


def canonical_json_line(obj: object) -> str:
    """Single-line canonical form, for JSONL records."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False, ensure_ascii=False) + "\n"


def dump_json(obj: object, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(obj))
