"""Result tables and their CSV form (17 significant digits, no locale)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    x = float(v)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


@dataclass
class Table:
    name: str
    headers: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *row) -> None:
        if len(row) != len(self.headers):
            raise ValueError(f"{self.name}: expected {len(self.headers)} columns, got {len(row)}")
        self.rows.append(list(row))

    def column(self, header: str) -> list:
        i = self.headers.index(header)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.headers)
        for r in self.rows:
            w.writerow([format_value(v) for v in r])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def to_dict(self) -> dict:
        return {"name": self.name, "headers": self.headers, "rows": [[format_value(v) for v in r] for r in self.rows]}
