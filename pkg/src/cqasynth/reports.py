"""Report rendering: aligned text tables, TSV files, and bar-chart figures.

Every report is built as (headers, rows) once and then rendered to stdout,
to a delimited file, and optionally to a PNG next to it. matplotlib is
imported lazily so library users who never render figures do not pay for
it.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from .corpus import DatasetStats
from .evaluation import AggregateReport, EvaluationReport

Rows = list[list[str]]

_DOMAIN_TITLES = {
    "children": "Child.",
    "literature": "Liter.",
    "news": "News.",
    "exam": "Exam.",
    "wikipedia": "Wiki.",
    "other": "Other",
}
_DOMAIN_ORDER = ("children", "literature", "news", "exam", "wikipedia", "other")


def format_table(headers: Sequence[str], rows: Rows, title: str | None = None) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def line(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()

    out = []
    if title:
        out.append(title)
    out.append(line(headers))
    out.append("  ".join("-" * w for w in widths))
    out.extend(line(row) for row in rows)
    return "\n".join(out)


def write_tsv(path: str | Path, headers: Sequence[str], rows: Rows) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write("\t".join(headers) + "\n")
        for row in rows:
            handle.write("\t".join(row) + "\n")


def save_bar_chart(
    path: str | Path,
    title: str,
    ylabel: str,
    categories: Sequence[str],
    series: Mapping[str, Sequence[float]],
) -> None:
    """Grouped bar chart; one group per category, one bar per series."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(categories)), 4.0))
    width = 0.8 / max(1, len(series))
    for offset, (label, values) in enumerate(series.items()):
        positions = [i + offset * width for i in range(len(categories))]
        ax.bar(positions, list(values), width=width, label=label)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(categories))])
    ax.set_xticklabels(categories, rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def domain_title(domain: str) -> str:
    return _DOMAIN_TITLES.get(domain, domain.title())


def ordered_domains(domains: Sequence[str]) -> list[str]:
    present = set(domains)
    return [d for d in _DOMAIN_ORDER if d in present]


# ---------------------------------------------------------------------------
# report builders


def stats_rows(stats: DatasetStats) -> tuple[list[str], Rows]:
    headers = ["Data type", "#Q-As", "Percentage"]
    rows = [
        ["Answerable / Open-ended", f"{stats.counts['open']:,}",
         f"{stats.percentages['open']:.1f}%"],
        ["Answerable / Closed-ended / Yes", f"{stats.counts['yes']:,}",
         f"{stats.percentages['yes']:.1f}%"],
        ["Answerable / Closed-ended / No", f"{stats.counts['no']:,}",
         f"{stats.percentages['no']:.1f}%"],
        ["Unanswerable", f"{stats.counts['unknown']:,}",
         f"{stats.percentages['unknown']:.1f}%"],
        ["Total answerable", f"{stats.answerable_total:,}", ""],
        ["Total", f"{stats.total:,}", ""],
    ]
    return headers, rows


def evaluation_rows(label: str, report: EvaluationReport) -> tuple[list[str], Rows]:
    domains = ordered_domains(list(report.per_domain))
    headers = ["Data", *(domain_title(d) for d in domains)]
    rows = [[label, *(f"{report.per_domain[d]:.1f}" for d in domains)]]
    return headers, rows


def by_type_rows(
    label: str, report: Mapping[str, tuple[float | None, int]]
) -> tuple[list[str], Rows]:
    headers = ["Data", "Open", "Close", "Unanswerable"]
    cells = []
    for turn_type in ("open", "closed", "unanswerable"):
        score, _ = report.get(turn_type, (None, 0))
        cells.append("n/a" if score is None else f"{score:.1f}")
    return headers, [[label, *cells]]


def human_eval_rows(
    columns: Mapping[str, AggregateReport],
) -> tuple[list[str], Rows]:
    labels = list(columns)
    headers = ["Item", "Category", *labels]

    def pct(report: AggregateReport, item: str, option: str) -> str:
        return f"{getattr(report, item)[option]:.1f}%"

    rows: Rows = []
    sections = (
        ("Conversational Connectivity", "connectivity",
         (("dependent", "Dependent"), ("independent", "Independent"),
          ("unnatural", "Unnatural"))),
        ("Question Answerability", "answerability",
         (("answerable", "Answerable"), ("unanswerable", "Unanswerable"))),
        ("Answer Correctness", "correctness",
         (("correct", "Correct"), ("partially_correct", "Partially correct"),
          ("incorrect", "Incorrect"))),
    )
    for section_title, item, options in sections:
        for position, (option, option_title) in enumerate(options):
            rows.append([
                section_title if position == 0 else "",
                option_title,
                *(pct(columns[label], item, option) for label in labels),
            ])
    return headers, rows


def ac_recall_rows(
    rows_by_label: Mapping[str, tuple[float | None, float | None]],
) -> tuple[list[str], Rows]:
    headers = ["Training dataset", "Answerable-Recall", "Unanswerable-Recall"]

    def cell(value: float | None) -> str:
        return "n/a" if value is None else f"{value:.1f}"

    rows = [
        [label, cell(answerable), cell(unanswerable)]
        for label, (answerable, unanswerable) in rows_by_label.items()
    ]
    return headers, rows
