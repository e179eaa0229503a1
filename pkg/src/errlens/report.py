"""Report artifacts: canonical JSON, CSV, a dependency-free SVG chart, and a
fixed-width text table.

The SVG is assembled as plain SVG 1.1 markup -- one ``rect.bar`` per region,
a dashed ``line.baseline`` at the split's baseline error rate -- with all
coordinates formatted to fixed decimals so identical reports always render
byte-identical files.  Error rates are displayed with three decimals
(Python's round-half-to-even formatting) everywhere a human reads them;
the JSON keeps full precision.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

from .regions import RegionReport
from .serialize import canonical_json


@dataclass(frozen=True, slots=True)
class PlotStyle:
    """Geometry and colors of the error-rate chart."""

    width: int = 900
    height: int = 480
    margin: int = 48
    bar_color: str = "#4a90d9"
    baseline_color: str = "#c0392b"
    axis_color: str = "#333333"
    font_size: int = 12
    max_regions: int = 20

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.font_size <= 0:
            raise ValueError("plot dimensions must be positive")
        if self.margin < 0 or 2 * self.margin >= min(self.width, self.height):
            raise ValueError("margin must leave a positive chart area")
        if self.max_regions < 1:
            raise ValueError("max_regions must be >= 1")


def _num(x: float) -> str:
    return f"{x:.2f}"


def render_error_plot(
    report: RegionReport,
    style: PlotStyle = PlotStyle(),
    path: str | None = None,
) -> str:
    """SVG chart of per-region error rates, worst regions on top.

    Bars span ``error_rate * chart width``; the dashed vertical line marks
    the baseline error rate.  At most ``style.max_regions`` regions are
    drawn.  An empty report still renders the axes and baseline.  When
    ``path`` is given the markup is also written there.
    """
    regions = report.regions[: style.max_regions]
    left = style.margin
    top = style.margin
    chart_w = style.width - 2 * style.margin
    chart_h = style.height - 2 * style.margin
    bottom = top + chart_h
    fs = style.font_size

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{style.width}" height="{style.height}" '
        f'viewBox="0 0 {style.width} {style.height}">',
        f'<text x="{_num(left)}" y="{_num(top - fs)}" '
        f'font-size="{fs + 2}" fill="{style.axis_color}">'
        f'{escape(report.split)} split: region error rates '
        f'(baseline {report.baseline_error_rate:.3f}, '
        f'{report.n_misclassified}/{report.n_total} misclassified)</text>',
    ]

    # axes and x ticks
    parts.append(
        f'<line class="axis" x1="{_num(left)}" y1="{_num(top)}" '
        f'x2="{_num(left)}" y2="{_num(bottom)}" stroke="{style.axis_color}"/>'
    )
    parts.append(
        f'<line class="axis" x1="{_num(left)}" y1="{_num(bottom)}" '
        f'x2="{_num(left + chart_w)}" y2="{_num(bottom)}" '
        f'stroke="{style.axis_color}"/>'
    )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = left + tick * chart_w
        parts.append(
            f'<line class="tick" x1="{_num(x)}" y1="{_num(bottom)}" '
            f'x2="{_num(x)}" y2="{_num(bottom + 4)}" stroke="{style.axis_color}"/>'
        )
        parts.append(
            f'<text x="{_num(x)}" y="{_num(bottom + 4 + fs)}" '
            f'font-size="{fs}" text-anchor="middle" '
            f'fill="{style.axis_color}">{tick:.2f}</text>'
        )

    if regions:
        row_h = chart_h / len(regions)
        bar_h = min(0.45 * row_h, 18.0)
        for i, region in enumerate(regions):
            y_row = top + i * row_h
            label = (f"{region.condition.text}  "
                     f"(rate {region.error_rate:.3f}, "
                     f"n={region.coverage})")
            parts.append(
                f'<text x="{_num(left + 4)}" y="{_num(y_row + fs)}" '
                f'font-size="{fs}" fill="{style.axis_color}">'
                f'{escape(label)}</text>'
            )
            parts.append(
                f'<rect class="bar" x="{_num(left)}" '
                f'y="{_num(y_row + row_h - bar_h - 2)}" '
                f'width="{_num(region.error_rate * chart_w)}" '
                f'height="{_num(bar_h)}" fill={quoteattr(style.bar_color)}/>'
            )

    x_base = left + report.baseline_error_rate * chart_w
    parts.append(
        f'<line class="baseline" x1="{_num(x_base)}" y1="{_num(top)}" '
        f'x2="{_num(x_base)}" y2="{_num(bottom)}" '
        f'stroke={quoteattr(style.baseline_color)} stroke-dasharray="4 3"/>'
    )
    parts.append("</svg>")
    markup = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(markup)
    return markup


_COLUMNS = ("condition", "support", "coverage", "errors", "error_rate")


def _table_rows(report: RegionReport) -> list[tuple[str, ...]]:
    return [
        (r.condition.text, str(r.support), str(r.coverage),
         str(r.errors_in_region), f"{r.error_rate:.3f}")
        for r in report.regions
    ]


def render_text_table(report: RegionReport) -> str:
    """Fixed-width table of the report's regions: a header line, then one
    line per region."""
    rows = _table_rows(report)
    widths = [
        max(len(_COLUMNS[c]), *(len(row[c]) for row in rows), 1)
        if rows else len(_COLUMNS[c])
        for c in range(len(_COLUMNS))
    ]

    def line(cells: tuple[str, ...]) -> str:
        return "  ".join(
            cells[c].ljust(widths[c]) if c == 0 else cells[c].rjust(widths[c])
            for c in range(len(cells))
        ).rstrip()

    out = [line(_COLUMNS)]
    out.extend(line(row) for row in rows)
    return "\n".join(out) + "\n"


def write_report_csv(report: RegionReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_COLUMNS)
        writer.writerows(_table_rows(report))


def write_report_files(
    report: RegionReport,
    out_dir: str,
    style: PlotStyle = PlotStyle(),
    basename: str = "report",
    table_basename: str = "table",
) -> dict[str, str]:
    """Write ``<basename>.json/.csv/.svg`` and ``<table_basename>.txt``.

    Returns the written paths keyed by artifact kind.  Writing the same
    report twice produces byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "json": os.path.join(out_dir, f"{basename}.json"),
        "csv": os.path.join(out_dir, f"{basename}.csv"),
        "svg": os.path.join(out_dir, f"{basename}.svg"),
        "table": os.path.join(out_dir, f"{table_basename}.txt"),
    }
    with open(paths["json"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(report.to_json_obj()))
    write_report_csv(report, paths["csv"])
    with open(paths["svg"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_error_plot(report, style))
    with open(paths["table"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_text_table(report))
    return paths
