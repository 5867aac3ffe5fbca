"""Trace records, the trace CSV format and trace comparison.

File layout::

    # scenario=<name> digest=<hex>
    k,t,iL,vo,u
    0,0,6.3157894736842105e-05,0,1
    ...

Reals are written with 17 significant digits so a write/read round trip is
exact. A quantity that was not monitored is an empty field.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

__all__ = [
    "TraceRecord",
    "TraceFile",
    "TraceFormatError",
    "CompareReport",
    "write_csv",
    "read_csv",
    "compare_traces",
]

HEADER = "k,t,iL,vo,u"
_META = re.compile(r"^# scenario=(?P<name>\S*) digest=(?P<digest>[0-9a-f]*)$")


@dataclass(frozen=True, slots=True)
class TraceRecord:
    k: int
    t: float
    iL: float | None
    vo: float | None
    u: int | None


class TraceFormatError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass
class TraceFile:
    name: str
    digest: str
    records: list[TraceRecord]


def _real(x: float | None) -> str:
    return "" if x is None else format(x, ".17g")


def write_csv(path, records: Iterable[TraceRecord], name: str, digest: str) -> None:
    if re.search(r"\s", name):
        raise ValueError(f"scenario name must not contain whitespace: {name!r}")
    lines = [f"# scenario={name} digest={digest}", HEADER]
    for r in records:
        u = "" if r.u is None else str(int(r.u))
        lines.append(f"{r.k},{_real(r.t)},{_real(r.iL)},{_real(r.vo)},{u}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_real(text: str, path, lineno: int, col: str) -> float | None:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise TraceFormatError(path, lineno, f"column {col}: not a number: {text!r}") from None


def read_csv(path) -> TraceFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except FileNotFoundError:
        raise TraceFormatError(path, None, "no such file") from None
    except UnicodeDecodeError as exc:
        raise TraceFormatError(path, None, f"not an ASCII trace file ({exc.reason})") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TraceFormatError(path, 1, "empty file")
    m = _META.match(lines[0])
    if m is None:
        raise TraceFormatError(path, 1, "expected '# scenario=<name> digest=<hex>'")
    if len(lines) < 2 or lines[1] != HEADER:
        raise TraceFormatError(path, 2, f"expected header {HEADER!r}")
    records = []
    for lineno, line in enumerate(lines[2:], start=3):
        cols = line.split(",")
        if len(cols) != 5:
            raise TraceFormatError(path, lineno, f"expected 5 columns, got {len(cols)}")
        try:
            k = int(cols[0])
        except ValueError:
            raise TraceFormatError(path, lineno, f"column k: not an integer: {cols[0]!r}") from None
        t = _parse_real(cols[1], path, lineno, "t")
        if t is None:
            raise TraceFormatError(path, lineno, "column t: missing")
        iL = _parse_real(cols[2], path, lineno, "iL")
        vo = _parse_real(cols[3], path, lineno, "vo")
        if cols[4] == "":
            u = None
        elif cols[4] in ("0", "1"):
            u = int(cols[4])
        else:
            raise TraceFormatError(path, lineno, f"column u: expected 0 or 1, got {cols[4]!r}")
        records.append(TraceRecord(k, t, iL, vo, u))
    return TraceFile(m["name"], m["digest"], records)


@dataclass
class CompareReport:
    passed: bool
    structural: str | None = None
    rows: int = 0
    tolerance: float = 0.0
    max_rel: dict[str, float] = field(default_factory=dict)
    rmse: dict[str, float] = field(default_factory=dict)
    u_mismatches: int = 0
    first_u_mismatch: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    scale = max(abs(a), abs(b))
    if not math.isfinite(scale):
        return math.inf
    return abs(a - b) / scale


def compare_traces(a, b, tolerance: float) -> CompareReport:
    """Compare two trace files column by column.

    Structural problems (different scenario digest, row count or tick
    alignment) fail the comparison without computing numeric differences.
    """
    ta, tb = read_csv(a), read_csv(b)
    ra, rb = ta.records, tb.records
    rep = CompareReport(passed=False, tolerance=tolerance, rows=min(len(ra), len(rb)))
    if ta.digest != tb.digest:
        rep.structural = f"scenario digest differs ({ta.digest[:12]} vs {tb.digest[:12]})"
        return rep
    if len(ra) != len(rb):
        rep.structural = f"row count differs ({len(ra)} vs {len(rb)})"
        return rep
    for x, y in zip(ra, rb):
        if x.k != y.k:
            rep.structural = f"tick misalignment at row k={x.k} vs k={y.k}"
            return rep
    for col in ("iL", "vo"):
        xs = [getattr(r, col) for r in ra]
        ys = [getattr(r, col) for r in rb]
        if all(v is None for v in xs) and all(v is None for v in ys):
            continue
        if any(v is None for v in xs) or any(v is None for v in ys):
            rep.structural = f"column {col} is monitored in only one trace"
            return rep
        rep.max_rel[col] = max((_rel(x, y) for x, y in zip(xs, ys)), default=0.0)
        sq = math.fsum((x - y) ** 2 for x, y in zip(xs, ys))
        rep.rmse[col] = math.sqrt(sq / len(xs)) if xs else 0.0
    for x, y in zip(ra, rb):
        if x.u != y.u:
            rep.u_mismatches += 1
            if rep.first_u_mismatch is None:
                rep.first_u_mismatch = x.k
    rep.passed = rep.u_mismatches == 0 and all(v <= tolerance for v in rep.max_rel.values())
    return rep
