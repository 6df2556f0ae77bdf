"""CheckReport and its two serialisations (key=value records and CSV)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

CLASSES = ("identity", "analytic", "regression", "diagnostic")
CSV_COLUMNS = ("suite", "group", "beta", "p", "q", "lambda", "mu", "value", "bound", "pass", "runtime_ms")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one suite run.

    ``klass`` says what kind of assertion ``passed`` reflects: an exact
    discrete identity, an analytic bound with calibrated constants, a frozen
    regression constant, or a diagnostic that never gates.  ``runtime_ms``
    is excluded from equality so reruns compare equal.
    """

    suite: str
    group: str
    klass: str
    value: float
    bound: float | None
    passed: bool
    tolerance: float | None = None
    label: str = ""
    beta: float | None = None
    p: float | None = None
    q: float | None = None
    lam: float | None = None
    mu: float | None = None
    worst: str = ""
    details: tuple[tuple[str, str], ...] = ()
    runtime_ms: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.klass not in CLASSES:
            raise ValueError(f"unknown report class {self.klass!r}")
        object.__setattr__(self, "details", tuple((str(k), _fmt(v)) for k, v in self.details))

    @property
    def gates(self) -> bool:
        """Whether this report can fail a run."""
        return self.klass != "diagnostic"

    @property
    def ok(self) -> bool:
        return self.passed or not self.gates

    def detail(self, key: str) -> str:
        return dict(self.details)[key]

    def record(self, timings: bool = False) -> str:
        rows = [("suite", self.suite), ("group", self.group), ("label", self.label), ("class", self.klass),
                ("beta", self.beta), ("p", self.p), ("q", self.q), ("lambda", self.lam), ("mu", self.mu),
                ("value", self.value), ("bound", self.bound), ("tolerance", self.tolerance),
                ("pass", self.passed), ("worst", self.worst), *self.details]
        if timings:
            rows.append(("runtime_ms", round(self.runtime_ms, 3)))
        return "\n".join(f"{k}={_fmt(v)}" for k, v in rows)

    def csv_row(self, timings: bool = False) -> list[str]:
        runtime = _fmt(round(self.runtime_ms, 3)) if timings else ""
        return [self.suite if not self.label else f"{self.suite}[{self.label}]", self.group,
                *(_fmt(v) for v in (self.beta, self.p, self.q, self.lam, self.mu, self.value, self.bound)),
                _fmt(self.passed), runtime]


def render_csv(reports, timings: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.csv_row(timings))
    return buf.getvalue()


def render_records(reports, timings: bool = False) -> str:
    return "\n\n".join(r.record(timings) for r in reports) + "\n"


def write_reports(reports, out_dir, timings: bool = False) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, rec_path = out / "results.csv", out / "reports.txt"
    csv_path.write_text(render_csv(reports, timings))
    rec_path.write_text(render_records(reports, timings))
    return csv_path, rec_path


def ratio_or_zero(num: float, den: float) -> float:
    """num/den with 0/0 = 0 (both sides vanish, e.g. for a constant symbol)."""
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den
