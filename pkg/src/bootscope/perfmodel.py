"""Timing estimates and scheduler benchmark statistics.

Two small models live here:

* the LOC estimate: executable line count times a per-line time constant
  (10 ns by default).  "Executable" means non-blank and not comment-only;
  the counter recognizes ``//``, ``#`` and ``*``-prefixed lines plus
  ``/* ... */`` blocks, and nothing subtler (no string-literal awareness).
* benchmark summaries: mean and sample standard deviation (n-1 denominator;
  population variant behind a flag) per (scheduler, metric, concurrency)
  group, with "faster" verdicts by strictly lower mean.  No significance
  testing, but each comparison reports its delta against the combined
  stddev as advisory text.

Sample CSV rows are ``scheduler,metric,concurrency,value_seconds`` and
summary CSV rows are ``scheduler,metric,concurrency,mean,stddev[,n]``, both
with a header line.
"""

from __future__ import annotations

import csv
import importlib.resources
import io
import math
import statistics
from dataclasses import dataclass, field

from .errors import BootscopeError

DEFAULT_T_INSTR_NS = 10.0
METRICS = ("real", "user", "system")

GroupKey = tuple[str, str, int]  # (scheduler, metric, concurrency)


class PerfError(BootscopeError):
    pass


class SpanOutOfRange(PerfError):
    pass


class UnknownFunction(PerfError):
    pass


class EmptyGroup(PerfError):
    pass


class MismatchedGroups(PerfError):
    pass


class IncompleteMatrix(PerfError):
    def __init__(self, missing: list[str]):
        super().__init__("missing cells: " + ", ".join(missing))
        self.missing = missing


# -- LOC model ---------------------------------------------------------------


@dataclass(frozen=True)
class LocModel:
    loc_counts: dict[str, int] = field(default_factory=dict)
    t_instr_ns: float = DEFAULT_T_INSTR_NS

    def __post_init__(self):
        if self.t_instr_ns <= 0:
            raise ValueError("per-line time must be positive")
        for name, count in self.loc_counts.items():
            if count < 0:
                raise ValueError(f"negative line count for {name!r}")


def _scan_line(line: str, in_block: bool) -> tuple[bool, bool]:
    """Classify one line: (has executable code, block-comment state after)."""
    stripped = line.strip()
    if not in_block:
        if not stripped:
            return False, False
        if stripped.startswith(("//", "#", "*")):
            return False, False
    has_code = False
    i = 0
    while i < len(line):
        if in_block:
            close = line.find("*/", i)
            if close < 0:
                return has_code, True
            i = close + 2
            in_block = False
        else:
            open_ = line.find("/*", i)
            segment = line[i:] if open_ < 0 else line[i:open_]
            slashes = segment.find("//")
            if slashes >= 0:
                segment = segment[:slashes]
            if segment.strip():
                has_code = True
            if open_ < 0 or slashes >= 0:
                return has_code, False
            i = open_ + 2
            in_block = True
    return has_code, in_block


def count_loc(source: str, start_line: int, end_line: int) -> int:
    """Count executable lines in the inclusive 1-based span."""
    lines = source.splitlines()
    if not 1 <= start_line <= end_line <= len(lines):
        raise SpanOutOfRange(
            f"span {start_line}..{end_line} outside file of {len(lines)} lines"
        )
    count = 0
    in_block = False
    # Walk from the top so a comment block opened before the span is seen.
    for number, line in enumerate(lines, start=1):
        has_code, in_block = _scan_line(line, in_block)
        if start_line <= number <= end_line and has_code:
            count += 1
    return count


def estimate_time(model: LocModel, function: str) -> float:
    """Estimated nanoseconds: line count times the per-line constant."""
    if function not in model.loc_counts:
        raise UnknownFunction(function)
    return model.loc_counts[function] * model.t_instr_ns


def parse_duration_ns(text: str) -> float:
    """Parse '10ns', '2.5us', '1ms', '0.1s' or a bare nanosecond count."""
    units = {"ns": 1.0, "us": 1e3, "ms": 1e6, "s": 1e9}
    cleaned = text.strip().lower()
    for suffix, factor in sorted(units.items(), key=lambda kv: -len(kv[0])):
        if cleaned.endswith(suffix):
            return float(cleaned[: -len(suffix)].strip()) * factor
    return float(cleaned)


# -- benchmark statistics ------------------------------------------------------


@dataclass(frozen=True)
class BenchSample:
    scheduler: str
    metric: str
    concurrency: int
    value: float  # seconds

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.concurrency < 1:
            raise ValueError("concurrency must be a positive integer")
        if self.value < 0:
            raise ValueError("time values cannot be negative")

    @property
    def key(self) -> GroupKey:
        return (self.scheduler, self.metric, self.concurrency)


@dataclass(frozen=True)
class BenchSummary:
    scheduler: str
    metric: str
    concurrency: int
    mean: float
    stddev: float | None  # absent when n < 2
    n: int | None = None  # unknown for ingested summary rows

    @property
    def key(self) -> GroupKey:
        return (self.scheduler, self.metric, self.concurrency)


@dataclass(frozen=True)
class Verdict:
    metric: str
    concurrency: int
    faster: str  # scheduler name, or "tie"
    delta_mean: float
    advisory: str


def summarize(samples: list[BenchSample], key: GroupKey, population: bool = False) -> BenchSummary:
    """Mean and stddev for one (scheduler, metric, concurrency) group."""
    values = [s.value for s in samples if s.key == key]
    if not values:
        raise EmptyGroup(f"no samples for group {key}")
    if len(values) < 2:
        stddev = None
    elif population:
        stddev = statistics.pstdev(values)
    else:
        stddev = statistics.stdev(values)
    scheduler, metric, concurrency = key
    return BenchSummary(
        scheduler=scheduler, metric=metric, concurrency=concurrency,
        mean=statistics.fmean(values), stddev=stddev, n=len(values),
    )


def summarize_all(samples: list[BenchSample], population: bool = False) -> list[BenchSummary]:
    keys = sorted({s.key for s in samples}, key=lambda k: (k[1], k[2], k[0]))
    return [summarize(samples, key, population=population) for key in keys]


def compare(a: BenchSummary, b: BenchSummary) -> Verdict:
    """Lower mean wins; equal means tie.  Groups must match."""
    if (a.metric, a.concurrency) != (b.metric, b.concurrency):
        raise MismatchedGroups(
            f"cannot compare {a.metric}/{a.concurrency} with {b.metric}/{b.concurrency}"
        )
    delta = abs(a.mean - b.mean)
    if a.mean < b.mean:
        faster = a.scheduler
    elif b.mean < a.mean:
        faster = b.scheduler
    else:
        faster = "tie"
    if a.stddev is not None and b.stddev is not None:
        combined = math.hypot(a.stddev, b.stddev)
        ratio = f"{delta / combined:.1f}x" if combined > 0 else "inf"
        advisory = f"delta {delta:g}s vs combined stddev {combined:.3g}s ({ratio})"
    else:
        advisory = f"delta {delta:g}s (stddev unavailable)"
    return Verdict(metric=a.metric, concurrency=a.concurrency,
                   faster=faster, delta_mean=delta, advisory=advisory)


# -- CSV ingestion -------------------------------------------------------------


def _rows(text: str, required: tuple[str, ...]) -> list[dict[str, str]]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise PerfError("empty CSV: header line required")
    missing = [col for col in required if col not in reader.fieldnames]
    if missing:
        raise PerfError(f"CSV header missing columns: {', '.join(missing)}")
    return [row for row in reader if any((v or "").strip() for v in row.values())]


def read_samples_csv(text: str) -> list[BenchSample]:
    """Rows of ``scheduler,metric,concurrency,value_seconds``."""
    samples = []
    for i, row in enumerate(_rows(text, ("scheduler", "metric", "concurrency", "value_seconds")), 2):
        try:
            samples.append(BenchSample(
                scheduler=row["scheduler"].strip(),
                metric=row["metric"].strip(),
                concurrency=int(row["concurrency"]),
                value=float(row["value_seconds"]),
            ))
        except ValueError as exc:
            raise PerfError(f"samples CSV line {i}: {exc}") from None
    return samples


def read_summaries_csv(text: str) -> list[BenchSummary]:
    """Rows of ``scheduler,metric,concurrency,mean,stddev`` (optional ``n``)."""
    summaries = []
    for i, row in enumerate(_rows(text, ("scheduler", "metric", "concurrency", "mean", "stddev")), 2):
        try:
            n_text = (row.get("n") or "").strip()
            summaries.append(BenchSummary(
                scheduler=row["scheduler"].strip(),
                metric=row["metric"].strip(),
                concurrency=int(row["concurrency"]),
                mean=float(row["mean"]),
                stddev=float(row["stddev"]),
                n=int(n_text) if n_text else None,
            ))
        except ValueError as exc:
            raise PerfError(f"summaries CSV line {i}: {exc}") from None
    return summaries


def bundled_summaries() -> list[BenchSummary]:
    """The packaged ULE vs 4BSD demo rows (two concurrency levels per metric)."""
    text = importlib.resources.files("bootscope").joinpath(
        "data", "scheduler_summaries.csv").read_text()
    return read_summaries_csv(text)


# -- report rendering -----------------------------------------------------------


def _fmt(value: float | None) -> str:
    if value is None:
        return "-"
    return f"{value:g}"


_METRIC_TITLES = {
    "real": "real time statistics (seconds)",
    "user": "user time statistics (seconds)",
    "system": "system time statistics (seconds)",
}


def render_bench_tables(summaries: list[BenchSummary], fmt: str = "text") -> str:
    """One table per metric: per-concurrency means, stddevs and the faster verdict.

    Requires both schedulers for every (metric, concurrency) cell; anything
    missing raises IncompleteMatrix naming the absent cells.
    """
    if fmt not in ("text", "markdown"):
        raise ValueError(f"unknown format {fmt!r}; use 'text' or 'markdown'")
    title = "scheduler benchmark comparison"
    if not summaries:
        return title + "\n" if fmt == "text" else f"# {title}\n"

    schedulers = sorted({s.scheduler for s in summaries})
    if len(schedulers) != 2:
        raise IncompleteMatrix([f"need exactly two schedulers, got {schedulers}"])
    left, right = schedulers
    by_key = {s.key: s for s in summaries}

    missing = []
    metrics = [m for m in METRICS if any(s.metric == m for s in summaries)]
    table_rows: dict[str, list[tuple[BenchSummary, BenchSummary, Verdict]]] = {}
    for metric in metrics:
        concurrencies = sorted({s.concurrency for s in summaries if s.metric == metric})
        rows = []
        for concurrency in concurrencies:
            a = by_key.get((left, metric, concurrency))
            b = by_key.get((right, metric, concurrency))
            if a is None or b is None:
                absent = left if a is None else right
                missing.append(f"{metric}/{concurrency}: {absent}")
                continue
            rows.append((a, b, compare(a, b)))
        table_rows[metric] = rows
    if missing:
        raise IncompleteMatrix(missing)

    header = ["Concurrent Processes", left, f"{left} Stddev", right, f"{right} Stddev", "faster"]
    out: list[str] = []
    if fmt == "markdown":
        out.append(f"# {title}")
        for metric in metrics:
            out.append("")
            out.append(f"## {_METRIC_TITLES[metric]}")
            out.append("")
            out.append("| " + " | ".join(header) + " |")
            out.append("|" + "|".join(" --- " for _ in header) + "|")
            for a, b, verdict in table_rows[metric]:
                out.append(
                    f"| {a.concurrency} | {_fmt(a.mean)} | {_fmt(a.stddev)}"
                    f" | {_fmt(b.mean)} | {_fmt(b.stddev)} | {verdict.faster} |"
                )
            for _, _, verdict in table_rows[metric]:
                out.append(f"- {verdict.concurrency} processes: {verdict.advisory}")
    else:
        out.append(title)
        for metric in metrics:
            out.append("")
            out.append(_METRIC_TITLES[metric])
            rows = [header] + [
                [str(a.concurrency), _fmt(a.mean), _fmt(a.stddev),
                 _fmt(b.mean), _fmt(b.stddev), verdict.faster]
                for a, b, verdict in table_rows[metric]
            ]
            widths = [max(len(row[col]) for row in rows) for col in range(len(header))]
            for row in rows:
                out.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
            for _, _, verdict in table_rows[metric]:
                out.append(f"  note: {verdict.concurrency} processes: {verdict.advisory}")
    return "\n".join(out) + "\n"
