"""Run-table ingestion and emission (CSV primary, JSON equivalent).

CSV layout::

    # format_version=1 data_unit=tokens
    family,pattern,sparsity,nonzero_params,data,loss
    t5-c4,unstructured,0,1328125,16384000000,3.2...

Leading ``#`` lines carry ``key=value`` metadata and are optional. Numbers are
written with 17 significant digits so a write/parse round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Iterable, TextIO, Union

from .errors import DomainError, RunTableError
from .law import FORMAT_VERSION, RunRecord, SweepDataset

COLUMNS = ("family", "pattern", "sparsity", "nonzero_params", "data", "loss")
NUMERIC = ("sparsity", "nonzero_params", "data", "loss")

Source = Union[str, os.PathLike, TextIO]


def _read_text(source: Source) -> str:
    if hasattr(source, "read"):
        return source.read()
    try:
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise RunTableError(f"run table not found: {source}", kind="file-not-found") from None


def parse_run_table(source: Source) -> SweepDataset:
    """Parse a CSV or JSON run table from a path or text stream."""
    text = _read_text(source)
    if text.startswith("\ufeff"):
        text = text[1:]
    if text.lstrip()[:1] in ("[", "{"):
        return _parse_json(text)
    return _parse_csv(text)


def _build(rows: list[tuple[int, dict]], meta: dict) -> SweepDataset:
    if not rows:
        raise RunTableError("run table has no rows", kind="empty-table")
    records = []
    family = None
    for line, row in rows:
        fam = str(row["family"]).strip()
        if not fam:
            raise RunTableError("empty family label", line, kind="malformed-row")
        if family is None:
            family = fam
        elif fam != family:
            raise RunTableError(f"family {fam!r} differs from {family!r}", line, kind="mixed-family")
        try:
            values = {k: float(row[k]) for k in NUMERIC}
        except (TypeError, ValueError) as exc:
            raise RunTableError(f"non-numeric field ({exc})", line, kind="malformed-row") from None
        pattern = str(row["pattern"]).strip() or "unstructured"
        try:
            records.append(RunRecord(pattern=pattern, **values))
        except DomainError as exc:
            raise RunTableError(str(exc), line, kind="malformed-row") from None
    version = meta.get("format_version", str(FORMAT_VERSION))
    if str(version) != str(FORMAT_VERSION):
        raise RunTableError(f"unsupported format_version {version}", kind="format")
    return SweepDataset(tuple(records), family, meta.get("data_unit", "tokens"))


def _check_columns(names: Iterable[str], line=None):
    names = [n.strip() for n in names]
    unknown = [n for n in names if n not in COLUMNS]
    if unknown:
        raise RunTableError(f"unknown column(s): {', '.join(unknown)}", line, kind="column")
    missing = [c for c in COLUMNS if c not in names]
    if missing:
        raise RunTableError(f"missing column(s): {', '.join(missing)}", line, kind="column")
    if len(set(names)) != len(names):
        raise RunTableError("duplicate column names", line, kind="column")
    return names


def _parse_csv(text: str) -> SweepDataset:
    meta = {}
    lines = text.splitlines()
    first = 0
    while first < len(lines) and (lines[first].startswith("#") or not lines[first].strip()):
        for token in lines[first].lstrip("#").split():
            if "=" in token:
                key, value = token.split("=", 1)
                meta[key] = value
        first += 1
    if first == len(lines):
        raise RunTableError("run table has no header", kind="empty-table")
    reader = csv.reader(lines[first:])
    header = _check_columns(next(reader), first + 1)
    rows = []
    for fields in reader:
        line = first + reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise RunTableError(f"expected {len(header)} fields, got {len(fields)}", line,
                                kind="malformed-row")
        rows.append((line, dict(zip(header, (f.strip() for f in fields)))))
    return _build(rows, meta)


def _parse_json(text: str) -> SweepDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RunTableError(f"invalid JSON: {exc.msg}", exc.lineno, kind="malformed-row") from None
    meta = {}
    if isinstance(doc, dict):
        meta = {k: v for k, v in doc.items() if k in ("format_version", "data_unit")}
        family = doc.get("family")
        items = doc.get("records")
        if not isinstance(items, list):
            raise RunTableError("JSON run table object needs a 'records' array", kind="format")
        items = [dict(it, family=it.get("family", family)) if isinstance(it, dict) else it
                 for it in items]
    elif isinstance(doc, list):
        items = doc
    else:
        raise RunTableError("JSON run table must be an array or object", kind="format")
    rows = []
    for i, item in enumerate(items, start=1):
        if not isinstance(item, dict):
            raise RunTableError(f"record {i} is not an object", kind="malformed-row")
        _check_columns(item.keys())
        rows.append((i, item))
    return _build(rows, meta)


def format_run_table(data: SweepDataset) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version={FORMAT_VERSION} data_unit={data.data_unit}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in data.records:
        writer.writerow([data.family, r.pattern] + [
            f"{getattr(r, k):.17g}" for k in NUMERIC])
    return buf.getvalue()


def format_run_table_json(data: SweepDataset) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "family": data.family,
        "data_unit": data.data_unit,
        "records": [
            {"family": data.family, "pattern": r.pattern, "sparsity": r.sparsity,
             "nonzero_params": r.nonzero_params, "data": r.data, "loss": r.loss}
            for r in data.records
        ],
    }
    return json.dumps(doc, indent=2)


def format_points_csv(points) -> str:
    """CSV with columns sparsity,N,D,C,loss for contour and frontier points."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sparsity", "N", "D", "C", "loss"])
    for p in points:
        writer.writerow([f"{x:.17g}" for x in (p.sparsity, p.N, p.D, p.C, p.loss)])
    return buf.getvalue()
