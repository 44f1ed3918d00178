"""Plot-ready histogram CSVs, a ``metric,value`` CSV and a text summary.

Rendering is separate from writing so callers can check or stage the
files; everything rendered is a pure function of the results, so the same
results always give the same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dnstiming.detect.evaluate import (
    EvaluationError, Forest, Knn, Metrics, NaiveMask, attack_task, cache_task, evaluate, level_task,
)
from dnstiming.levels import CONTACT_LEVELS, DnsLevel, Label
from dnstiming.timing import COARSE, FINE, Binning, Histogram, format_histogram, histogram
from dnstiming.traffic import Transaction

METRICS_FORMAT = "#format=metrics/1"
METRICS_HEADER = "metric,value"
FIGURE_BINNING = Binning(0, 100_000, 1_000)  # 1 ms over 0-100 ms, the cache/resolve view

# standard histogram files, always written (empty ones carry headers only)
STANDARD_HISTOGRAMS = ("rtt_0_100ms", "rtt_coarse", "cache_fine", "attack_fine")

TASK_TITLES = {
    "attack": "Attack identification, cache answers vs spoofed answers",
    "cache": "Cache identification, cache vs resolved answers",
    "level": "DNS level identification, resolved answers only",
}
# the binary attack task reports error types, the others spread across trials
TASK_COLUMNS = {"attack": ("Acc", "FP", "FN"), "cache": ("Acc", "Dev", "Var"), "level": ("Acc", "Dev", "Var")}


class ReportError(OSError):
    pass


@dataclass(frozen=True)
class TaskResult:
    task: str
    classifier: str
    metrics: Metrics


@dataclass
class ReportResults:
    histograms: dict[str, Histogram] = field(default_factory=dict)
    results: list[TaskResult] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.histograms and not self.results


def collect_histograms(transactions: Sequence[Transaction]) -> dict[str, Histogram]:
    benign = [t for t in transactions if t.label is Label.BENIGN]
    rtt = np.array([t.rtt_us for t in benign], dtype=np.int64)
    cache = np.array([t.rtt_us for t in benign if t.level is DnsLevel.CACHE], dtype=np.int64)
    attack = np.array([t.rtt_us for t in transactions if t.label is Label.ATTACK], dtype=np.int64)
    out = {
        "rtt_0_100ms": histogram(rtt, FIGURE_BINNING),
        "rtt_coarse": histogram(rtt, COARSE),
        "cache_fine": histogram(cache, FINE),
        "attack_fine": histogram(attack, FINE),
    }
    for level in CONTACT_LEVELS:
        sel = np.array([t.rtt_us for t in benign if t.level is level], dtype=np.int64)
        if sel.size:
            out[f"level_{level.value}_coarse"] = histogram(sel, COARSE)
    return out


def run_tasks(transactions: Sequence[Transaction], seed: int, trials: int = 1, k: int = 5,
              tree_count: int = 50, max_depth: int = 8) -> list[TaskResult]:
    """Evaluate RF and KNN (plus the naive mask on the attack task) on every task the data supports."""
    learned = [Forest(tree_count, max_depth), Knn(k)]
    tasks = [
        ("attack", attack_task(transactions), learned + [NaiveMask()], Label.ATTACK.value),
        ("cache", cache_task(transactions), learned, None),
        ("level", level_task(transactions), learned, None),
    ]
    out = []
    for name, (x, y), classifiers, positive in tasks:
        if np.unique(y).size < 2:
            continue
        for clf in classifiers:
            try:
                ev = evaluate(x, y, clf, trials=trials, seed=seed, positive=positive)
            except EvaluationError:
                continue  # too few samples for a split
            out.append(TaskResult(name, clf.name, ev.metrics))
    return out


def build_report(transactions: Sequence[Transaction], seed: int, trials: int = 1, k: int = 5,
                 tree_count: int = 50, max_depth: int = 8) -> ReportResults:
    return ReportResults(collect_histograms(transactions),
                         run_tasks(transactions, seed, trials, k, tree_count, max_depth))


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.12g}"


def render_metrics(results: ReportResults) -> str:
    lines = [METRICS_FORMAT, METRICS_HEADER]
    for r in results.results:
        prefix = f"{r.task}.{r.classifier.lower()}"
        lines += [f"{prefix}.{name},{_num(float(value))}" for name, value in r.metrics.rows()]
    return "\n".join(lines) + "\n"


def _cells(task: str, m: Metrics) -> tuple[float, float, float]:
    if TASK_COLUMNS[task][1] == "FP":
        return m.accuracy, m.fp_rate, m.fn_rate
    return m.accuracy, m.deviation, m.variance


def render_summary(results: ReportResults) -> str:
    lines = []
    for task, title in TASK_TITLES.items():
        rows = [r for r in results.results if r.task == task]
        if not rows:
            continue
        trials = rows[0].metrics.trials
        lines += [f"{title} ({trials} trial{'s' * (trials != 1)})",
                  f"{'Method':<8}" + "".join(f"{c:>10}" for c in TASK_COLUMNS[task])]
        for r in rows:
            lines.append(f"{r.classifier:<8}" + "".join(f"{_fmt_cell(v):>10}" for v in _cells(task, r.metrics)))
        lines.append("")
    if not lines:
        lines = ["No classification results.", ""]
    for name in sorted(results.histograms):
        h = results.histograms[name]
        in_range = int(h.counts.sum())
        lines.append(f"histogram {name}: {h.total} samples, {in_range} in range")
    return "\n".join(lines).rstrip("\n") + "\n"


def _fmt_cell(v: float) -> str:
    return "n/a" if math.isnan(v) else f"{v:.4f}"


def _empty_histogram() -> str:
    return "#format=histogram/1\n#total=0\nbin_lo_us,bin_hi_us,count\n"


def render_report(results: ReportResults | None) -> dict[str, str]:
    """File name -> contents for a report directory."""
    results = results or ReportResults()
    files = {}
    for name in STANDARD_HISTOGRAMS:
        h = results.histograms.get(name)
        files[f"hist_{name}.csv"] = _empty_histogram() if h is None or h.total == 0 else format_histogram(h)
    for name in sorted(set(results.histograms) - set(STANDARD_HISTOGRAMS)):
        files[f"hist_{name}.csv"] = format_histogram(results.histograms[name])
    files["metrics.csv"] = render_metrics(results)
    files["summary.txt"] = render_summary(results)
    return files


def emit_report(results: ReportResults | None, out_dir: str | Path) -> list[Path]:
    """Write the report files into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in render_report(results).items():
            path = out / name
            path.write_bytes(text.encode("utf-8"))
            written.append(path)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc.strerror or exc}") from None
    return written
