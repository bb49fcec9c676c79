"""Deterministic CSV/JSON rendering for experiment outputs.

Every rendered document embeds the resolved run configuration and the
library version.  No timestamps or environment data are included, so the
same configuration and seed produce byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

from . import __version__
from .errors import ConfigError

LIBRARY = "tubescore"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    text = str(value)
    if "," in text or "\n" in text or "#" in text:
        raise ConfigError(f"value {text!r} cannot be written as a CSV cell")
    return text


def _compact_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def header_lines(config: dict, extras: dict | None = None) -> list[str]:
    lines = [f"# {LIBRARY} {__version__}",
             f"# config: {_compact_json(config)}"]
    for key in sorted(extras or {}):
        lines.append(f"# {key}: {_compact_json(extras[key])}")
    return lines


def format_csv(columns, rows, config: dict,
               extras: dict | None = None) -> str:
    out = header_lines(config, extras)
    out.append(",".join(str(c) for c in columns))
    for row in rows:
        if len(row) != len(columns):
            raise ConfigError(
                f"row has {len(row)} cells, expected {len(columns)}")
        out.append(",".join(_cell(v) for v in row))
    return "\n".join(out) + "\n"


def format_json(payload, config: dict) -> str:
    doc = {
        "library": {"name": LIBRARY, "version": __version__},
        "config": config,
        "results": payload,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def flatten_scalars(payload, prefix: str = "") -> list[tuple[str, object]]:
    """Dotted-key key/value rows for nested dictionaries of scalars.

    Lists of scalars become indexed keys; lists of dictionaries (tables)
    are skipped — they belong in a proper columnar rendering.
    """
    rows: list[tuple[str, object]] = []
    if isinstance(payload, dict):
        for key in payload:
            rows.extend(flatten_scalars(payload[key], f"{prefix}{key}."))
    elif isinstance(payload, (list, tuple)):
        if any(isinstance(v, dict) for v in payload):
            return []
        for i, v in enumerate(payload):
            rows.extend(flatten_scalars(v, f"{prefix}{i}."))
    else:
        rows.append((prefix[:-1], payload))
    return rows


def write_text(text: str, out: str | None) -> None:
    if out is None:
        print(text, end="")
    else:
        path = Path(out)
        if path.parent != Path("") and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def error_record(exc: BaseException, exit_code: int) -> str:
    return _compact_json({
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": exit_code,
    })
