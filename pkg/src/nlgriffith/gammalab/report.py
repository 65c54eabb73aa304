"""Experiment reports: rows per ladder entry, verdict, CSV/JSON/SVG output."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

__all__ = ["ReportRow", "Verdict", "ExperimentReport", "relative_gap", "CSV_COLUMNS", "fmt"]

#: Column order of the CSV export. ``runtime_ms`` is kept out of the CSV so
#: that repeated runs produce identical bytes; it is stored in the JSON.
CSV_COLUMNS = ("epsilon", "h", "energy_total", "bulk_estimate", "surface_estimate",
               "limit_target", "relative_gap", "iterations", "case", "min_slack")


def fmt(x) -> str:
    """Twelve significant digits, ``nan`` for missing values."""
    if x is None:
        return "nan"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, str):
        return x
    return format(float(x), ".12g")


def relative_gap(energy: float, target: float) -> float:
    if target is None or energy is None or math.isnan(target) or math.isnan(energy):
        return math.nan
    return abs(energy - target) / max(target, 1e-12)


@dataclass
class ReportRow:
    epsilon: float
    h: float
    energy_total: float
    bulk_estimate: float
    surface_estimate: float
    limit_target: float
    relative_gap: float = math.nan
    iterations: int = 0
    runtime_ms: float = 0.0
    case: str = ""
    min_slack: float = math.nan
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.relative_gap = relative_gap(self.energy_total, self.limit_target)

    def check_gap(self) -> bool:
        r = relative_gap(self.energy_total, self.limit_target)
        if math.isnan(r):
            return math.isnan(self.relative_gap)
        return abs(r - self.relative_gap) <= 1e-12 * max(r, 1e-300)


@dataclass
class Verdict:
    passed: bool
    reasons: list = field(default_factory=list)

    def line(self) -> str:
        if self.passed:
            return "PASS"
        return "FAIL " + "; ".join(self.reasons)


@dataclass
class ExperimentReport:
    experiment: str
    rows: list
    verdict: Verdict
    provenance: dict
    complete: bool = True
    summary: dict = field(default_factory=dict)

    # -- serialisation ----------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "complete": self.complete,
            "verdict": asdict(self.verdict),
            "provenance": self.provenance,
            "summary": _clean(self.summary),
            "rows": [_clean(asdict(r)) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        rows = []
        for rd in d["rows"]:
            rd = {k: (math.nan if v is None and k not in ("case", "extras") else v)
                  for k, v in rd.items()}
            stored = rd.pop("relative_gap")
            row = ReportRow(**rd)
            if not (math.isnan(stored) and math.isnan(row.relative_gap)) and \
                    abs(stored - row.relative_gap) > 1e-12 * max(abs(stored), 1e-300):
                raise ValueError("stored relative_gap disagrees with recomputation")
            rows.append(row)
        return cls(d["experiment"], rows, Verdict(**d["verdict"]), d["provenance"],
                   d.get("complete", True), d.get("summary", {}))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))

    def write(self, csv_path: Optional[Path] = None, json_path: Optional[Path] = None,
              svg_path: Optional[Path] = None) -> None:
        if csv_path:
            Path(csv_path).write_text(self.to_csv())
        if json_path:
            Path(json_path).write_text(self.to_json() + "\n")
        if svg_path:
            self.plot_svg(svg_path)

    def plot_svg(self, path) -> None:
        """Log-log line chart of the relative gap (and minimum slack) against epsilon."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = "nlgriffith"
        fig, ax = plt.subplots(figsize=(5, 3.5))
        cases = sorted({r.case for r in self.rows})
        plotted = False
        for case in cases:
            rs = [r for r in self.rows if r.case == case]
            xs = [r.epsilon for r in rs if r.relative_gap > 0]
            ys = [r.relative_gap for r in rs if r.relative_gap > 0]
            if xs:
                ax.loglog(xs, ys, marker="o", label=f"gap {case}".strip())
                plotted = True
            xs = [r.epsilon for r in rs if r.min_slack > 0]
            ys = [r.min_slack for r in rs if r.min_slack > 0]
            if xs:
                ax.loglog(xs, ys, marker="s", linestyle="--", label=f"slack {case}".strip())
                plotted = True
        ax.set_xlabel("epsilon")
        ax.set_ylabel("relative gap / slack")
        ax.set_title(self.experiment)
        if plotted:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def _clean(obj):
    """Replace non-finite floats by ``None`` for strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj
