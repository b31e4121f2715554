"""Report serialization: JSON (full precision), flat CSV rows and text tables."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Sequence

from mlwalk.certify import CertResult, TableRow
from mlwalk.stats import TestReport

__all__ = ["FORMATS", "TABLE_COLUMNS", "render", "report_dict", "write_report"]

FORMATS = ("csv", "json", "table")

TABLE_COLUMNS = ("beta", "a", "n", "theta1", "theta2", "ell1", "ell2", "ratio", "rhs", "certified")


def report_dict(report: Any) -> Any:
    if isinstance(report, (TestReport, CertResult)):
        return report.to_dict()
    if isinstance(report, TableRow):
        return {"lambda": report.lam, **report.formatted(), "result": report.result.to_dict()}
    if isinstance(report, (list, tuple)):
        return [report_dict(r) for r in report]
    return report


def _flat(report: Any) -> list[dict[str, Any]]:
    if isinstance(report, TestReport):
        return [report.csv_row()]
    if isinstance(report, TableRow):
        return [{"lambda": report.lam, **report.formatted()}]
    if isinstance(report, CertResult):
        d = report.to_dict()
        row = {f"inputs.{k}": v for k, v in d.pop("inputs").items() if not isinstance(v, dict)}
        for key in ("theta1", "theta2"):
            row[f"inputs.{key}"] = report.to_dict()["inputs"][key]["label"]
        for key in ("ell1", "ell2"):
            c = d.pop(key)
            row[f"{key}.re"], row[f"{key}.im"] = c["re"], c["im"]
        d.pop("notes")
        row.update(d)
        return [row]
    if isinstance(report, (list, tuple)):
        return [r for item in report for r in _flat(item)]
    if isinstance(report, dict):
        return [{k: (json.dumps(v) if isinstance(v, (dict, list)) else v) for k, v in report.items()}]
    raise TypeError(f"cannot flatten {type(report).__name__}")


def _table(report: Any) -> str:
    rows = report if isinstance(report, (list, tuple)) else [report]
    if rows and all(isinstance(r, TableRow) for r in rows):
        cells = [TABLE_COLUMNS] + [tuple(r.formatted()[c] for c in TABLE_COLUMNS) for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
        return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells) + "\n"
    flat = _flat(report)
    width = max(len(k) for row in flat for k in row)
    blocks = ["\n".join(f"{k.ljust(width)}  {v}" for k, v in row.items()) for row in flat]
    return "\n\n".join(blocks) + "\n"


def render(report: Any, fmt: str) -> str:
    """Text form of ``report``; CSV output includes the header."""
    if fmt == "json":
        return json.dumps(report_dict(report), indent=2) + "\n"
    if fmt == "table":
        return _table(report)
    if fmt == "csv":
        return _csv(_flat(report), header=True)
    raise ValueError(f"format must be one of {FORMATS}")


def _csv(rows: Sequence[dict[str, Any]], header: bool) -> str:
    keys: list[str] = []
    for row in rows:
        keys.extend(k for k in row if k not in keys)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    if header:
        w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_report(report: Any, fmt: str, path: str | Path | None) -> str:
    """Write ``report`` to ``path`` (stdout-style return when ``path`` is None).

    CSV appends, writing the header only when the file is new or empty, so a
    sweep can accumulate rows in one file.  JSON and table output overwrite.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if path is None:
        return render(report, fmt)
    path = Path(path)
    if fmt == "csv":
        fresh = not path.exists() or path.stat().st_size == 0
        text = _csv(_flat(report), header=fresh)
        with open(path, "a", newline="") as fh:
            fh.write(text)
        return text
    text = render(report, fmt)
    path.write_text(text)
    return text
