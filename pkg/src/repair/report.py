"""
CF-Safe - Report Rendering
Comparison table (one row per property, one column per method), JSON, CSV and advice transcript
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd

from src.repair.models import RepairReport
from src.utils.helpers import format_table_value, write_text

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("text", "json")


def _table_rows(reports: Sequence[RepairReport]):
    properties: List[str] = []
    methods: List[str] = []
    by_pair: Dict = {}
    for report in reports:
        if report.property not in properties:
            properties.append(report.property)
        if report.method not in methods:
            methods.append(report.method)
        by_pair[(report.property, report.method)] = report

    header = ["PCTL Query", "Original", *methods, "Note"]
    rows = []
    for prop in properties:
        runs = [by_pair[(prop, m)] for m in methods if (prop, m) in by_pair]
        cells = [prop, format_table_value(runs[0].original.value)]
        for method in methods:
            report = by_pair.get((prop, method))
            cells.append(format_table_value(report.repaired.value if report else None))
        if not any(r.repair_needed for r in runs):
            note = "no repair needed"
        else:
            worse = [r.method for r in runs if r.worse]
            note = f"worse after repair ({', '.join(worse)})" if worse else ""
        cells.append(note)
        rows.append(cells)
    return header, rows


def render_table(reports: Sequence[RepairReport]) -> str:
    header, rows = _table_rows(reports)
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(len(header))]
    last = len(header) - 1

    def line(cells):
        parts = []
        for c, cell in enumerate(cells):
            # query and note columns left-aligned, values right-aligned
            parts.append(cell.ljust(widths[c]) if c in (0, last) else cell.rjust(widths[c]))
        return "  ".join(parts).rstrip()

    lines = [line(header), line(["-" * w for w in widths])]
    lines.extend(line(r) for r in rows)
    return "\n".join(lines)


def summary_line(report: RepairReport) -> str:
    counts = report.counts
    return (
        f"{report.method}, {report.property}: frontier {counts.frontier_size}, ok {counts.ok}, "
        f"format_error {counts.format_error}, disabled_action {counts.disabled_action}, "
        f"no_alternative {counts.no_alternative}, overrides {len(report.overrides)}, "
        f"states {report.states_before} -> {report.states_after}"
    )


def render_text(reports: Sequence[RepairReport]) -> str:
    lines = [render_table(reports), ""]
    lines.extend(summary_line(r) for r in reports)
    for report in reports:
        for warning in report.warnings:
            lines.append(f"warning: {report.method}, {report.property}: {warning}")
    return "\n".join(lines) + "\n"


def render_json(reports: Sequence[RepairReport]) -> str:
    payload = {"reports": [r.model_dump(mode="json", by_alias=True) for r in reports]}
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_report(reports: Union[RepairReport, Sequence[RepairReport]], fmt: str = "text") -> bytes:
    if isinstance(reports, RepairReport):
        reports = [reports]
    if fmt == "text":
        return render_text(reports).encode("utf-8")
    if fmt == "json":
        return render_json(reports).encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}; use one of {', '.join(REPORT_FORMATS)}")


def render_advice_transcript(reports: Sequence[RepairReport]) -> str:
    lines = []
    for report in reports:
        for entry in report.advice:
            record = {"property": report.property, "method": report.method,
                      **entry.model_dump(mode="json", by_alias=True)}
            lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def report_dataframe(reports: Sequence[RepairReport]) -> pd.DataFrame:
    """One row per (property, method) run"""
    data = []
    for report in reports:
        data.append({
            "Property": report.property,
            "Method": report.method,
            "Original": report.original.value,
            "Repaired": report.repaired.value,
            "Frontier": report.counts.frontier_size,
            "OK": report.counts.ok,
            "Format Errors": report.counts.format_error,
            "Disabled": report.counts.disabled_action,
            "No Alternative": report.counts.no_alternative,
            "Overrides": len(report.overrides),
            "States Before": report.states_before,
            "States After": report.states_after,
            "Improved": report.improved,
        })
    return pd.DataFrame(data)


def write_reports(reports: Sequence[RepairReport], out_dir: Union[str, Path], run_name: str) -> List[Path]:
    """<run>.report.txt, .report.json, .report.csv and .advice.jsonl"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        write_text(out_dir / f"{run_name}.report.txt", render_text(reports)),
        write_text(out_dir / f"{run_name}.report.json", render_json(reports)),
        write_text(out_dir / f"{run_name}.advice.jsonl", render_advice_transcript(reports)),
    ]
    csv_path = out_dir / f"{run_name}.report.csv"
    report_dataframe(reports).to_csv(csv_path, index=False, encoding="utf-8", lineterminator="\n")
    paths.append(csv_path)
    logger.info("Saved %d report(s) to %s", len(reports), out_dir)
    return paths
