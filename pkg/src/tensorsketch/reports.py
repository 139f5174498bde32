"""Serializable experiment records (JSON nested, CSV flat)."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_FIELDS = ("experiment", "family", "m", "metric", "value", "lower", "upper")


def to_plain(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


@dataclass
class ExperimentReport:
    name: str
    config: dict
    metrics: dict
    reference: dict = field(default_factory=dict)
    passed: bool = True
    rows: list[dict] = field(default_factory=list)

    def add_row(self, family, m, metric, value, lower=None, upper=None) -> None:
        self.rows.append(
            {"experiment": self.name, "family": family, "m": m, "metric": metric,
             "value": value, "lower": lower, "upper": upper}
        )

    def to_dict(self) -> dict:
        return to_plain(
            {"name": self.name, "config": self.config, "metrics": self.metrics,
             "reference": self.reference, "passed": self.passed}
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def write(self, path, fmt: str = "json") -> None:
        text = self.to_json() if fmt == "json" else self.to_csv()
        Path(path).write_text(text + ("\n" if fmt == "json" else ""))


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else to_plain(row.get(k))) for k in CSV_FIELDS})
    return buf.getvalue()
