"""Report envelope and writers

A report is one JSON document with the top-level keys schema_version, command, config, results,
oracle, convergence, timing and status. Floats are written in Python's shortest round-trip form,
so reloading a report reproduces every value bit for bit. Report.model_validate_json is the
schema check.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from .stats import Stats

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


class Table(BaseModel):
    """A flat numeric table for external plotting"""

    name: str
    header: list[str]
    rows: list[list[float]]


class CommandOutcome(BaseModel):
    """What a command produces before it is wrapped into a report"""

    results: dict[str, Any]
    oracle: Optional[dict[str, Any]] = None
    convergence: Optional[dict[str, Any]] = None
    checks: dict[str, bool] = Field(default_factory=dict, description="Named pass/fail verdicts")
    timing: dict[str, Stats] = Field(default_factory=dict)
    tables: list[Table] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


class Report(BaseModel):
    schema_version: str = SCHEMA_VERSION
    command: str
    config: dict[str, Any] = Field(description="Effective configuration, tolerances included")
    results: dict[str, Any]
    oracle: Optional[dict[str, Any]] = None
    convergence: Optional[dict[str, Any]] = None
    timing: dict[str, Stats] = Field(description="Work counters per stage")
    status: Literal["ok", "fail"]


def render_report(report: Report) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2) + "\n"


def validate_report(text: str) -> Report:
    report = Report.model_validate_json(text)
    if report.schema_version != SCHEMA_VERSION:
        raise ValueError(f"report schema {report.schema_version} is not {SCHEMA_VERSION}")
    return report


def write_report(report: Report, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(render_report(report))
    logger.info(f"Report written to {path}")
    return path


def write_table(table: Table, directory: str, stem: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{stem}.{table.name}.csv")
    rows = np.asarray(table.rows, dtype=np.float64).reshape(-1, len(table.header))
    np.savetxt(path, rows, delimiter=",", header=",".join(table.header), comments="", fmt="%.17g")
    logger.info(f"Table written to {path}")
    return path
