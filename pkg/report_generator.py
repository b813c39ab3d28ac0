"""
Report Generation Module
Renders experiment and sweep reports as JSON, aligned text tables, Markdown,
HTML and per-trial CSV
"""

import json
import os
from typing import Any, Dict, List, Union

import markdown
import pandas as pd
from jinja2 import Environment

from eval_harness import MetricsReport, SweepReport
from logger_config import LoggerSetup

logger = LoggerSetup.get_logger(__name__)

Report = Union[MetricsReport, SweepReport]

TRIAL_COLUMNS = ["trial", "seed", "n_train", "n_test", "f1", "precision", "recall", "tp", "fp", "fn", "tn", "params"]
SWEEP_COLUMNS = ["value", "n_cascades", "retained_fraction", "mean_f1", "std_f1", "relative_f1"]

MARKDOWN_TEMPLATE = """# Cascade veracity {{ title }}

- Tool version: {{ report.tool_version }}
- Config hash: `{{ report.config_hash }}`
{%- if metrics %}
- Model: {{ report.config.model }}
- Cascades: {{ report.n_cascades }} ({{ report.n_rumors }} rumors, prevalence {{ "%.3f"|format(report.prevalence) }})
- Retained node fraction: {{ "%.3f"|format(report.retained_fraction) }}
- Features: {{ report.n_features }}

## Result

**Mean F1 {{ "%.4f"|format(report.mean_f1) }}** (std {{ "%.4f"|format(report.std_f1) }}) over {{ report.trials|length }} trials.
{%- if report.selection_stability is not none %}

Top-feature selection stability (mean pairwise Jaccard): {{ "%.3f"|format(report.selection_stability) }}
{%- endif %}

## Trials

{{ table }}
{%- if top_features %}

## Most weighted features (first trial)

| Feature | Weight |
|---|---|
{%- for name, weight in top_features %}
| `{{ name }}` | {{ "%.4f"|format(weight) }} |
{%- endfor %}
{%- endif %}
{%- else %}
- Sweep: {{ report.kind }}
{%- if report.reference_f1 is not none %}
- Untruncated mean F1: {{ "%.4f"|format(report.reference_f1) }}
{%- endif %}

## Points

{{ table }}
{%- endif %}

## Configuration

```json
{{ config_json }}
```
"""

HTML_TEMPLATE = """<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <meta name="viewport" content="width=device-width, initial-scale=1.0">
    <title>{{ title }}</title>
    <style>
        body {
            font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif;
            line-height: 1.6;
            color: #333;
            background-color: #f5f5f5;
            padding: 20px;
        }

        .container {
            max-width: 1200px;
            margin: 0 auto;
            background-color: white;
            padding: 40px;
            box-shadow: 0 0 20px rgba(0,0,0,0.1);
        }

        h1, h2 {
            color: #1c69d4;
        }

        table {
            border-collapse: collapse;
            margin: 20px 0;
        }

        th, td {
            padding: 6px 12px;
            border-bottom: 1px solid #e0e0e0;
            text-align: right;
        }

        th {
            background-color: #1c69d4;
            color: white;
        }

        pre {
            background-color: #f0f7ff;
            padding: 15px;
            border-left: 5px solid #1c69d4;
        }
    </style>
</head>
<body>
<div class="container">
{{ body }}
</div>
</body>
</html>
"""

_environment = Environment(autoescape=False, keep_trailing_newline=True)


def report_to_dict(report: Report) -> Dict[str, Any]:
    """Report payload without the per-point nested experiment reports"""
    payload = report.to_dict()
    if isinstance(report, SweepReport):
        for point in payload["points"]:
            point.pop("report", None)
    return payload


def trials_frame(report: MetricsReport) -> pd.DataFrame:
    """One row per trial"""
    rows = []
    for trial in report.trials:
        row = {column: getattr(trial, column) for column in TRIAL_COLUMNS if column != "params"}
        row["params"] = json.dumps(trial.params, sort_keys=True)
        rows.append(row)
    return pd.DataFrame(rows, columns=TRIAL_COLUMNS)


def sweep_frame(report: SweepReport) -> pd.DataFrame:
    """One row per sweep point"""
    rows = [{column: getattr(point, column) for column in SWEEP_COLUMNS} for point in report.points]
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def report_frame(report: Report) -> pd.DataFrame:
    return trials_frame(report) if isinstance(report, MetricsReport) else sweep_frame(report)


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(report: Report) -> str:
    """
    Aligned-column text table

    Experiment reports list every trial followed by a mean row; sweep reports
    list one row per point.
    """
    frame = report_frame(report)
    if isinstance(report, MetricsReport):
        frame = frame.drop(columns=["params"])
    header = list(frame.columns)
    rows = [[_cell(value) for value in record] for record in frame.itertuples(index=False, name=None)]
    if isinstance(report, MetricsReport):
        footer = ["mean", "", "", "", _cell(report.mean_f1)] + [""] * (len(header) - 5)
        rows.append(footer)
        rows.append(["std", "", "", "", _cell(report.std_f1)] + [""] * (len(header) - 5))
    widths = [max([len(name)] + [len(row[i]) for row in rows]) for i, name in enumerate(header)]
    lines = ["  ".join(name.rjust(widths[i]) for i, name in enumerate(header))]
    lines.append("  ".join("-" * width for width in widths))
    lines.extend("  ".join(cell.rjust(widths[i]) for i, cell in enumerate(row)) for row in rows)
    return "\n".join(lines) + "\n"


def _markdown_table(frame: pd.DataFrame) -> str:
    header = "| " + " | ".join(frame.columns) + " |"
    rule = "|" + "---|" * len(frame.columns)
    body = ["| " + " | ".join(_cell(v) for v in record) + " |" for record in frame.itertuples(index=False, name=None)]
    return "\n".join([header, rule] + body)


class ReportGenerator:
    """Writes experiment and sweep reports to an output directory"""

    def __init__(self, output_dir: str = "reports"):
        """
        Initialize report generator

        Parameters:
        -----------
        output_dir : str
            Directory to save generated reports
        """
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    @staticmethod
    def render_json(report: Report) -> str:
        """Canonical JSON text; byte-identical for identical reports"""
        return json.dumps(report_to_dict(report), sort_keys=True, indent=2, default=str) + "\n"

    @staticmethod
    def render_markdown(report: Report) -> str:
        metrics = isinstance(report, MetricsReport)
        frame = report_frame(report)
        top_features: List = report.trials[0].top_features if metrics and report.trials else []
        return _environment.from_string(MARKDOWN_TEMPLATE).render(
            title="experiment report" if metrics else f"{report.kind} sweep",
            report=report,
            metrics=metrics,
            table=_markdown_table(frame),
            top_features=top_features,
            config_json=json.dumps(report.config, sort_keys=True, indent=2, default=str),
        )

    @classmethod
    def render_html(cls, report: Report) -> str:
        body = markdown.markdown(cls.render_markdown(report), extensions=["tables", "fenced_code"])
        title = "Cascade veracity report"
        return _environment.from_string(HTML_TEMPLATE).render(title=title, body=body)

    def _write(self, name: str, text: str) -> str:
        path = self._path(name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info(f"Wrote {path}")
        return path

    def generate_json_report(self, report: Report, name: str = "report.json") -> str:
        return self._write(name, self.render_json(report))

    def generate_text_report(self, report: Report, name: str = "report.txt") -> str:
        return self._write(name, format_table(report))

    def generate_markdown_report(self, report: Report, name: str = "report.md") -> str:
        return self._write(name, self.render_markdown(report))

    def generate_html_report(self, report: Report, name: str = "report.html") -> str:
        return self._write(name, self.render_html(report))

    def generate_csv(self, report: Report, name: str = "trials.csv") -> str:
        path = self._path(name)
        report_frame(report).to_csv(path, index=False, float_format="%.6f")
        logger.info(f"Wrote {path}")
        return path

    def generate_all(self, report: Report, stem: str = "report") -> Dict[str, str]:
        """
        Write every rendering

        Returns:
        --------
        dict : rendering name -> path
        """
        return {
            "json": self.generate_json_report(report, f"{stem}.json"),
            "text": self.generate_text_report(report, f"{stem}.txt"),
            "markdown": self.generate_markdown_report(report, f"{stem}.md"),
            "html": self.generate_html_report(report, f"{stem}.html"),
            "csv": self.generate_csv(report, f"{stem}.csv"),
        }
