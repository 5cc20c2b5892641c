"""Deterministic CSV / key-value emission."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def header_comment(config_hash: str) -> str:
    return f"# multimode_opo {__version__} config_sha256={config_hash}\n"


def write_csv(path: Path, columns, rows, config_hash: str) -> Path:
    lines = [header_comment(config_hash), ",".join(columns) + "\n"]
    lines.extend(",".join(fmt(v) for v in row) + "\n" for row in rows)
    path.write_text("".join(lines), encoding="utf-8", newline="\n")
    return path
