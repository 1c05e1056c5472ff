"""CSV and report writers. Everything written here is byte-deterministic."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

TRAJECTORY_COLUMNS = ("t", "variant", "N", "trial", "m_kf", "sigma_kf", "m_emp", "sigma_emp", "w2_gap")
SERIES_COLUMNS = ("t", "variant", "N", "quantity", "value")
FACTOR_COLUMNS = ("t", "variant", "N", "trial", "factor", "coupling_gap")


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csv(path, columns, rows) -> None:
    """Write ``rows`` (tuples in column order) with a header, one line each."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def canonical(rows, key_cols=(1, 2, 3, 0)):
    """Sort rows by (variant, N, trial, t)."""
    return sorted(rows, key=lambda r: tuple(r[i] for i in key_cols))


@dataclass
class Check:
    variant: str
    quantity: str
    measured: float
    expected: float | None = None
    source: str = ""
    low: float | None = None
    high: float | None = None
    passed: bool | None = None
    detail: str = ""

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        s = f"[{status}] {self.variant:>12s}  {self.quantity:<34s} measured={self.measured:.6g}"
        if self.expected is not None:
            s += f"  expected={self.expected:.6g} ({self.source})"
        if self.low is not None or self.high is not None:
            lo = "-inf" if self.low is None else f"{self.low:.6g}"
            hi = "inf" if self.high is None else f"{self.high:.6g}"
            s += f"  band=[{lo}, {hi}]"
        if self.detail:
            s += f"  {self.detail}"
        return s


def in_band(x, lo=None, hi=None) -> bool:
    return math.isfinite(x) and (lo is None or x >= lo) and (hi is None or x <= hi)


@dataclass
class ScenarioReport:
    scenario: str
    constants: dict
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def find(self, variant, quantity) -> Check:
        for c in self.checks:
            if c.variant == variant and c.quantity == quantity:
                return c
        raise KeyError((variant, quantity))

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def text(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        lines += [f"  {k} = {v:.12g}" for k, v in self.constants.items()]
        lines += [c.line() for c in self.checks]
        lines += [f"note: {n}" for n in self.notes]
        lines += [f"file: {k} -> {v}" for k, v in sorted(self.files.items())]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "constants": self.constants,
            "checks": [asdict(c) for c in self.checks],
            "notes": self.notes,
            "files": self.files,
            "tables": self.tables,
            "passed": self.passed,
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        self.files.setdefault("report", "report.txt")
        self.files.setdefault("summary", "summary.json")
        (out / "report.txt").write_text(self.text())
        (out / "summary.json").write_text(json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    # JSON has no NaN/inf
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj
