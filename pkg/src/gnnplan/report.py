"""Evaluation report arithmetic and rendering.

Per (mode, domain) row: instance count, coverage (count and percent),
L = total length of solved plans, PL/OL = policy/oracle total lengths over
the instances solved by both the policy and the oracle within budget, the
plan-quality ratio PQ = PL/OL over that common set, and the number of
instances with a known oracle length. A totals row closes each mode section.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class ReportRow:
    domain: str
    mode: str
    instances: int
    solved: int
    total_length: int
    pl: int
    ol: int
    pq: float | None
    oracle_known: int

    @property
    def coverage_pct(self) -> float:
        return 100.0 * self.solved / self.instances if self.instances else 0.0


@dataclass
class EvalReport:
    rows: list[ReportRow]

    def modes(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.mode not in seen:
                seen.append(r.mode)
        return seen


def plan_quality(pl: int, ol: int) -> float | None:
    """PQ ratio, undefined when the common solved set is empty."""
    if ol <= 0:
        return None
    return pl / ol


def format_pq(pq: float | None) -> str:
    return "-" if pq is None else f"{pq:.4f}"


def build_report(traces: Sequence, oracle_lengths: Mapping[str, int | None]) -> EvalReport:
    """Aggregate traces (grouped by mode and domain) against oracle lengths.

    ``oracle_lengths`` maps instance id to the optimal plan length, or None
    when the oracle timed out; such instances count toward coverage but are
    excluded from PQ.
    """
    groups: dict[tuple[str, str], list] = {}
    for t in traces:
        if t.instance_id not in oracle_lengths:
            raise KeyError(f"trace instance {t.instance_id!r} has no oracle entry")
        key = (t.mode, t.domain)
        bucket = groups.setdefault(key, [])
        if any(prev.instance_id == t.instance_id for prev in bucket):
            raise ValueError(f"duplicate trace for instance {t.instance_id!r} in mode {t.mode!r}")
        bucket.append(t)

    rows: list[ReportRow] = []
    mode_order: list[str] = []
    for mode, _ in groups:
        if mode not in mode_order:
            mode_order.append(mode)
    for mode in mode_order:
        domain_rows: list[ReportRow] = []
        for (m, domain), bucket in groups.items():
            if m != mode:
                continue
            solved = [t for t in bucket if t.outcome == "solved"]
            common = [t for t in solved if oracle_lengths[t.instance_id] is not None]
            pl = sum(t.plan_length for t in common)
            ol = sum(oracle_lengths[t.instance_id] for t in common)
            domain_rows.append(
                ReportRow(
                    domain=domain,
                    mode=mode,
                    instances=len(bucket),
                    solved=len(solved),
                    total_length=sum(t.plan_length for t in solved),
                    pl=pl,
                    ol=ol,
                    pq=plan_quality(pl, ol) if common else None,
                    oracle_known=sum(
                        1 for t in bucket if oracle_lengths[t.instance_id] is not None
                    ),
                )
            )
        domain_rows.sort(key=lambda r: r.domain)
        rows.extend(domain_rows)
        if len(domain_rows) > 1:
            pl = sum(r.pl for r in domain_rows)
            ol = sum(r.ol for r in domain_rows)
            rows.append(
                ReportRow(
                    domain="total",
                    mode=mode,
                    instances=sum(r.instances for r in domain_rows),
                    solved=sum(r.solved for r in domain_rows),
                    total_length=sum(r.total_length for r in domain_rows),
                    pl=pl,
                    ol=ol,
                    pq=plan_quality(pl, ol) if ol > 0 else None,
                    oracle_known=sum(r.oracle_known for r in domain_rows),
                )
            )
    return EvalReport(rows)


_COLUMNS = ("domain", "instances", "solved", "coverage", "L", "PL", "OL", "PQ", "OL-known")


def _row_cells(row: ReportRow) -> tuple[str, ...]:
    return (
        row.domain,
        str(row.instances),
        str(row.solved),
        f"{row.coverage_pct:.1f}%",
        str(row.total_length),
        str(row.pl),
        str(row.ol),
        format_pq(row.pq),
        str(row.oracle_known),
    )


def render_text(report: EvalReport) -> str:
    """Aligned, human-readable tables, one section per mode."""
    out: list[str] = []
    for mode in report.modes():
        rows = [r for r in report.rows if r.mode == mode]
        table = [_COLUMNS] + [_row_cells(r) for r in rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(_COLUMNS))]
        out.append(f"mode: {mode}")
        for row in table:
            out.append(
                "  "
                + "  ".join(
                    cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                    for i, cell in enumerate(row)
                )
            )
        out.append("")
    return "\n".join(out).rstrip() + "\n"


def render_csv(report: EvalReport) -> str:
    """Machine-readable report, one line per row."""
    lines = ["mode," + ",".join(_COLUMNS)]
    for r in report.rows:
        cells = (
            r.domain,
            str(r.instances),
            str(r.solved),
            f"{r.coverage_pct:.4f}",
            str(r.total_length),
            str(r.pl),
            str(r.ol),
            format_pq(r.pq),
            str(r.oracle_known),
        )
        lines.append(r.mode + "," + ",".join(cells))
    return "\n".join(lines) + "\n"
