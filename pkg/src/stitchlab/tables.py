"""Tab-separated result tables with a versioned schema line.

Every table starts with '# stitchlab-table v1 kind=<kind>' followed by a
header row; readers refuse tables whose kind does not match expectations.
"""
from __future__ import annotations

from pathlib import Path

SCHEMA_VERSION = 1


def write_table(path, kind: str, header: list, rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# stitchlab-table v{SCHEMA_VERSION} kind={kind}", "\t".join(header)]
    for row in rows:
        lines.append("\t".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_table(path, expect_kind: str | None = None):
    """Returns (kind, header, rows) with rows as lists of strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# stitchlab-table"):
        raise ValueError(f"{path}: not a stitchlab table")
    head = lines[0].split()
    version = head[1]
    if version != f"v{SCHEMA_VERSION}":
        raise ValueError(f"{path}: unsupported table version {version}")
    kind = dict(kv.split("=", 1) for kv in head[2:])["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ValueError(f"{path}: table kind '{kind}', expected '{expect_kind}'")
    header = lines[1].split("\t")
    rows = [ln.split("\t") for ln in lines[2:] if ln.strip()]
    return kind, header, rows
