# src/reporter.py

"""
Report rendering for Pledgepoint: HTML pages through jinja2 and terminal
tables through rich.
"""

from typing import Dict, Mapping, Optional, Sequence

import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape
from rich.console import Console
from rich.table import Table

from src.config import config
from src.utils import Utils


class Reporter:
    """
    HTML report generator for key-results tables and bound reports.
    """

    def __init__(self, template_dir: Optional[str] = None):
        self.template_dir = template_dir if template_dir else config.TEMPLATES_DIR

        # Jinja2 configuration
        self.env = Environment(
            loader=FileSystemLoader(self.template_dir),
            autoescape=select_autoescape(['html', 'xml'])
        )
        self.env.filters["amount"] = Utils.format_amount

    def render_table1(self, rows: Sequence[Dict], params: Mapping[str, float]) -> str:
        """
        Render the key-results table.

        Args:
            rows: Table rows as produced by the table1 command
            params: Parameter set the rows were evaluated with

        Returns:
            str: HTML document
        """
        template = self.env.get_template("table1.html")
        return template.render(rows=list(rows), params=dict(sorted(params.items())))

    def render_bounds(self, bounds: Mapping[str, Dict]) -> str:
        template = self.env.get_template("bounds.html")
        return template.render(blocks=dict(sorted(bounds.items())))


def print_table1(rows: Sequence[Dict], console: Console) -> None:
    table = Table(title="Key results")
    for column in ("row", "contribution", "agent_set", "threshold", "condition", "status"):
        table.add_column(column, justify="right" if column in ("contribution", "threshold") else "left")
    for row in rows:
        status = row["status"]
        if status == "ok":
            status = "✅ ok" if row["condition_holds"] == "true" else "⚠️ condition fails"
        table.add_row(row["row"], row["contribution"], row["agent_set"], row["threshold"], row["condition"], status)
    console.print(table)


def print_bounds(bounds: Mapping[str, Dict], console: Console) -> None:
    for name, block in sorted(bounds.items()):
        table = Table(title=f"{name} ({block['mechanism']['kind']})")
        table.add_column("quantity")
        table.add_column("value", justify="right")
        table.add_row("threshold " + block["agent_set"], Utils.format_amount(block["threshold"]))
        table.add_row("net value", Utils.format_amount(block["net_value"]))
        if "sigma_bound" in block:
            table.add_row("sigma bound", Utils.format_amount(block["sigma_bound"]))
        for case, values in sorted(block.get("worst_case", {}).items()):
            table.add_row(f"{case} exact", Utils.format_amount(values["exact"]))
            table.add_row(f"{case} bound", Utils.format_amount(values["bound"]))
        if "q_max" in block:
            table.add_row("q_max", Utils.format_amount(block["q_max"]))
        if "funding_condition" in block:
            fc = block["funding_condition"]
            table.add_row("h0 + b ln2 + nd sigma < theta_N",
                          f"{Utils.format_amount(fc['lhs'])} < {Utils.format_amount(fc['rhs'])}: "
                          f"{Utils.format_amount(fc['holds'])}")
        table.add_row(block["condition"]["label"], Utils.format_amount(block["condition"]["holds"]))
        console.print(table)


def print_summary(summary: pd.DataFrame, console: Console) -> None:
    table = Table(title="Simulation summary")
    for column in summary.columns:
        table.add_column(str(column))
    for record in summary.to_dict(orient="records"):
        table.add_row(*[Utils.format_amount(v) if isinstance(v, float) else str(v) for v in record.values()])
    console.print(table)
