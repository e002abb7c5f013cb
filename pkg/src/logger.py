# src/logger.py

"""
Logger for Pledgepoint.
Handles all artifact writing for a session.
"""

import os
from typing import Dict, Optional, Sequence

import pandas as pd
from rich.console import Console

from src.config import config
from src.simulation import RunTrace
from src.utils import Utils

console = Console(stderr=True)


class ReportLogger:
    """
    Writes the artifacts of one session into an output directory.
    Every artifact is also recorded as a line of actions.log. Contents never
    carry timestamps, so reruns with the same seed are byte-identical.
    """

    def __init__(self, out_dir: Optional[str] = None):
        """Initializes the logger and resets the actions log."""
        self.out_dir = out_dir if out_dir else config.OUTPUT_DIR
        os.makedirs(self.out_dir, exist_ok=True)
        self.action_log_path = os.path.join(self.out_dir, "actions.log")
        with open(self.action_log_path, "w", encoding="utf-8") as f:
            f.write("")
        self.written = []

    def _path(self, filename: str) -> str:
        return os.path.join(self.out_dir, filename)

    def log_action(self, kind: str, filename: str, detail: str = "") -> None:
        line = f"{kind} | {filename}"
        if detail:
            line += f" | {detail}"
        with open(self.action_log_path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
        self.written.append(filename)
        if getattr(config, 'VERBOSE_LOGGING', False):
            console.print(f"[dim]Wrote {self._path(filename)}[/dim]")

    def _write_json(self, kind: str, filename: str, payload, detail: str = "") -> str:
        path = self._path(filename)
        with open(path, "w", encoding="utf-8") as f:
            f.write(Utils.canonical_json(payload))
        self.log_action(kind, filename, detail)
        return path

    def _write_frame(self, kind: str, filename: str, frame: pd.DataFrame, detail: str = "") -> str:
        path = self._path(filename)
        frame = frame.copy()
        for column in frame.columns:
            if frame[column].dtype == bool:
                frame[column] = frame[column].map(lambda v: "true" if v else "false")
        frame.to_csv(path, index=False, float_format=f"%.{config.REPORT_DECIMALS}f", lineterminator="\n")
        self.log_action(kind, filename, detail)
        return path

    def write_trace(self, trace: RunTrace) -> str:
        """
        Persist one run.

        Args:
            trace: Run trace, settlement report included

        Returns:
            str: Path of trace_<name>_<replicate>.json
        """
        status = "funded" if trace.report.funded else "unfunded"
        return self._write_json("trace", f"trace_{trace.name}_{trace.replicate}.json", trace.to_dict(), status)

    def write_summary(self, summary: pd.DataFrame) -> str:
        return self._write_frame("summary", "summary.csv", summary, f"{len(summary)} rows")

    def write_verdicts(self, verdicts: Dict[str, Dict]) -> str:
        failed = sorted(name for name, v in verdicts.items() if not v.get("holds", False))
        detail = "all hold" if not failed else f"failed: {', '.join(failed)}"
        return self._write_json("verdict", "verdict.json", verdicts, detail)

    def write_bounds(self, bounds: Dict[str, Dict]) -> str:
        return self._write_json("bounds", "bounds.json", bounds, f"{len(bounds)} mechanisms")

    def write_table1(self, rows: Sequence[Dict]) -> str:
        frame = pd.DataFrame(list(rows), columns=["row", "contribution", "agent_set", "threshold",
                                                  "condition", "condition_holds", "status"])
        return self._write_frame("table1", "table1.csv", frame, f"{len(frame)} rows")

    def write_check(self, name: str, payload: Dict) -> str:
        """Standalone check result (RBF, market, replay) as <name>.json."""
        holds = payload.get("passed", payload.get("holds"))
        detail = "" if holds is None else ("passed" if holds else "failed")
        return self._write_json("check", f"{name}.json", payload, detail)

    def write_html(self, filename: str, html: str) -> str:
        path = self._path(filename)
        with open(path, "w", encoding="utf-8") as f:
            f.write(html)
        self.log_action("html", filename)
        return path
