"""Report files: report.json, three CSV tables and a markdown summary."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

from cfbench.metrics import MetricReport, ModelMetrics
from cfbench.phantoms import REGIONS

DIGITS = 3


def _fmt(v: float | None, digits: int = 6) -> str:
    return "" if v is None else f"{v:.{digits}f}"


def table1_rows(report: MetricReport) -> tuple[list[str], list[list[float | None]], list[bool]]:
    """Columns, rows per model and whether higher is better, per column."""
    passes = sorted({k for m in report.models.values() for k in m.composition})
    cycles = sorted({k for m in report.models.values() for k in m.reversibility})
    cols = ([f"composition_l1_{k}" for k in passes] + [f"composition_ssim_{k}" for k in passes]
            + [f"reversibility_l1_{c}" for c in cycles] + ["realism_fid"])
    higher = [False] * len(passes) + [True] * len(passes) + [False] * len(cycles) + [False]
    rows = []
    for m in report.models.values():
        rows.append([m.composition.get(k, {}).get("l1") for k in passes]
                    + [m.composition.get(k, {}).get("ssim") for k in passes]
                    + [m.reversibility.get(c) for c in cycles] + [m.realism])
    return cols, rows, higher


def table2_rows(report: MetricReport) -> tuple[list[str], list[list[float | None]], list[bool]]:
    cols = ([f"effectiveness_{r.symbol}" for r in REGIONS]
            + [f"generalizability_{r.symbol}" for r in REGIONS])
    rows = [[m.effectiveness.get(r) for r in REGIONS] + [m.generalizability.get(r) for r in REGIONS]
            for m in report.models.values()]
    return cols, rows, [False] * len(cols)


def _csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def best_marks(rows: list[list[float | None]], higher: list[bool],
               digits: int = DIGITS) -> list[list[bool]]:
    """Mark the best entry of each column; entries tied at display precision all count."""
    marks = [[False] * len(higher) for _ in rows]
    for j, hi in enumerate(higher):
        vals = [round(r[j], digits) for r in rows if r[j] is not None]
        if not vals:
            continue
        best = max(vals) if hi else min(vals)
        for i, r in enumerate(rows):
            marks[i][j] = r[j] is not None and round(r[j], digits) == best
    return marks


def _markdown_table(title: str, names: list[str], cols: list[str], rows, higher) -> str:
    marks = best_marks(rows, higher)
    lines = [f"## {title}", "", "| model | " + " | ".join(cols) + " |",
             "|---|" + "---|" * len(cols)]
    for name, row, mark in zip(names, rows, marks):
        cells = []
        for v, b in zip(row, mark):
            s = "–" if v is None else f"{v:.{DIGITS}f}"
            cells.append(f"**{s}**" if b else s)
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def mean_nontarget(m: ModelMetrics) -> float | None:
    vals = [v for row in m.minimality.values() for v in row.values()]
    return sum(vals) / len(vals) if vals else None


def render_markdown(report: MetricReport) -> str:
    names = list(report.models)
    parts = ["# Counterfactual benchmark summary", "",
             f"Config hash: `{report.provenance.get('config_hash', '')}`", ""]
    cols, rows, hi = table1_rows(report)
    parts.append(_markdown_table("Composition, reversibility, realism", names, cols, rows, hi))
    cols, rows, hi = table2_rows(report)
    parts.append(_markdown_table("Effectiveness and generalizability (MAE)", names, cols, rows, hi))
    mini_rows = [[mean_nontarget(m)] for m in report.models.values()]
    parts.append(_markdown_table("Minimality (mean non-target MAE)", names,
                                 ["mean_nontarget_mae"], mini_rows, [False]))
    for name, m in report.models.items():
        if not m.minimality:
            continue
        parts.append(f"### Minimality matrix: {name}\n")
        parts.append("| target | " + " | ".join(r.symbol for r in REGIONS) + " |")
        parts.append("|---|" + "---|" * len(REGIONS))
        for t, row in zip(REGIONS, m.minimality_matrix()):
            cells = ["–" if v is None else f"{v:.{DIGITS}f}" for v in row]
            parts.append(f"| {t.symbol} | " + " | ".join(cells) + " |")
        parts.append("")
    if report.errors:
        parts.append("## Errors\n")
        parts += [f"- `{k}`: {v}" for k, v in sorted(report.errors.items())]
        parts.append("")
    return "\n".join(parts)


def emit_report(report: MetricReport, outdir: str | os.PathLike) -> dict[str, Path]:
    """Write all report files; rewriting the same report gives identical bytes."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(report.models)
    files = {}

    def write(name: str, text: str) -> None:
        (out / name).write_text(text)
        files[name] = out / name

    write("report.json", json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    cols, rows, _ = table1_rows(report)
    write("table1.csv", _csv(["model"] + cols,
                             [[n] + [_fmt(v) for v in r] for n, r in zip(names, rows)]))
    cols, rows, _ = table2_rows(report)
    write("table2.csv", _csv(["model"] + cols,
                             [[n] + [_fmt(v) for v in r] for n, r in zip(names, rows)]))
    mini = []
    for n, m in report.models.items():
        for t, row in zip(REGIONS, m.minimality_matrix()):
            if t in m.minimality:
                mini.append([n, t.symbol] + [_fmt(v) for v in row])
    write("minimality.csv", _csv(["model", "target"] + [r.symbol for r in REGIONS], mini))
    write("summary.md", render_markdown(report))
    return files


def load_report(path: str | os.PathLike) -> MetricReport:
    return MetricReport.from_json(json.loads(Path(path).read_text()))
