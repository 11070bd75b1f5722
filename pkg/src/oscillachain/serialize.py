"""CSV/JSON writing with round-trip float formatting.

All file outputs share one dialect: comma-separated, header row, LF line
endings, UTF-8, floats at 17 significant digits so parsing them back is
lossless.  CSV files carry their metadata in a JSON sidecar named
<file>.meta.json; JSON files embed it under the "metadata" key.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence


def fmt(value: float) -> str:
    """Format a float with enough digits to round-trip exactly."""
    return format(float(value), ".17g")


def write_csv(path: str | Path, header: Sequence[str],
              rows: Iterable[Sequence[object]]) -> None:
    """Write rows of floats/strings in the shared dialect."""
    lines = [",".join(header)]
    for row in rows:
        cells = [cell if isinstance(cell, str) else fmt(cell) for cell in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8",
                          newline="\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n",
                          encoding="utf-8", newline="\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta.json")


def write_sidecar(path: str | Path, metadata: dict) -> None:
    write_json(sidecar_path(path), metadata)
