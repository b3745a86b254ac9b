"""Experiment reports: JSON / CSV table / long-format plot data."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from ..errors import OutputUnwritable

HEADLINE = ("accuracy", "precision", "recall", "f1", "mcc", "auc_roc", "test_loss")


@dataclass
class Cell:
    """One experiment cell (a configuration evaluated on one data setup).

    ``folds`` holds per-fold ``{"metrics": ..., "confusion": ...}`` dicts;
    ``summary`` maps each headline metric to ``{"mean", "std"}``.
    """
    cell_id: str
    params: dict[str, Any]
    status: str = "ok"
    seed: Optional[int] = None
    dataset_hash: str = ""
    config: dict[str, Any] = field(default_factory=dict)
    folds: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, dict[str, Optional[float]]] = field(default_factory=dict)
    confusion: Optional[dict[str, int]] = None
    extra: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    def as_dict(self, timing: bool = True) -> dict:
        d = {
            "cell_id": self.cell_id,
            "params": self.params,
            "status": self.status,
            "seed": self.seed,
            "dataset_hash": self.dataset_hash,
            "config": self.config,
            "folds": self.folds,
            "summary": self.summary,
            "confusion": self.confusion,
            "extra": self.extra,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        return cls(**d)

    def mean(self, metric: str) -> Optional[float]:
        s = self.summary.get(metric)
        return None if s is None else s["mean"]


@dataclass
class Report:
    kind: str
    cells: list[Cell] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    series: dict[str, list[list]] = field(default_factory=dict)  # name -> [[x, y], ...]

    def as_dict(self, timing: bool = True) -> dict:
        return {
            "kind": self.kind,
            "meta": self.meta,
            "cells": [c.as_dict(timing) for c in self.cells],
            "series": self.series,
        }

    def canonical_json(self) -> str:
        """Serialisation without wall-clock fields, for reproducibility checks."""
        return json.dumps(self.as_dict(timing=False), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["kind"], [Cell.from_dict(c) for c in d["cells"]], d["meta"], d["series"])

    def cell(self, cell_id: str) -> Cell:
        for c in self.cells:
            if c.cell_id == cell_id:
                return c
        raise KeyError(cell_id)


def _x_key(x):
    # year-bucket labels like "2014-2015" sort by their first year
    if isinstance(x, str):
        head = x.replace(",", "-").split("-")[0]
        if head.isdigit():
            return (0, int(head), x)
        return (1, 0, x)
    return (0, x, str(x))


def table_rows(report: Report) -> tuple[list[str], list[list]]:
    param_keys: list[str] = []
    for c in report.cells:
        for k in c.params:
            if k not in param_keys:
                param_keys.append(k)
    header = ["cell_id", *param_keys, "status"]
    for m in HEADLINE:
        header += [f"{m}_mean", f"{m}_std"]
    rows = []
    for c in report.cells:
        row = [c.cell_id, *(c.params.get(k, "") for k in param_keys), c.status]
        for m in HEADLINE:
            s = c.summary.get(m) or {}
            row += ["" if s.get("mean") is None else s["mean"], "" if s.get("std") is None else s["std"]]
        rows.append(row)
    return header, rows


def plot_rows(report: Report) -> list[list]:
    rows = []
    for name in sorted(report.series):
        for x, y in sorted(report.series[name], key=lambda p: _x_key(p[0])):
            rows.append([name, x, y])
    return rows


def emit_report(report: Report, out_prefix: Union[str, os.PathLike],
                formats: Sequence[str] = ("json", "csv", "plotdata")) -> list[Path]:
    """Write ``<prefix>.json``, ``<prefix>.csv`` and ``<prefix>.plot.csv``."""
    prefix = Path(out_prefix)
    written = []
    try:
        if "json" in formats:
            p = prefix.with_name(prefix.name + ".json")
            p.write_text(json.dumps(report.as_dict(), indent=1) + "\n", encoding="utf-8")
            written.append(p)
        if "csv" in formats:
            p = prefix.with_name(prefix.name + ".csv")
            header, rows = table_rows(report)
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
            written.append(p)
        if "plotdata" in formats:
            p = prefix.with_name(prefix.name + ".plot.csv")
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["series", "x", "y"])
                w.writerows(plot_rows(report))
            written.append(p)
    except OSError as exc:
        raise OutputUnwritable(str(exc)) from exc
    return written


def load_report(path: Union[str, os.PathLike]) -> Report:
    with open(path, encoding="utf-8") as fh:
        return Report.from_dict(json.load(fh))
