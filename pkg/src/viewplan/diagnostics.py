"""Evaluation statistics: stability summaries, correlations, novelty bins, paired tests."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm, rankdata


@dataclass
class RunRecord:
    method: str
    budget: int
    scene_id: str
    metric_value: float
    coverage_fraction: float = float("nan")
    novelty_values: list[float] | None = None

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not math.isnan(self.coverage_fraction) and not 0.0 <= self.coverage_fraction <= 1.0:
            raise ValueError("coverage_fraction must lie in [0, 1]")


def load_run_records(path) -> list[RunRecord]:
    """Read ``method,N,scene_id,metric,coverage_fraction`` CSV rows (coverage optional)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"method", "N", "scene_id", "metric"}
        missing = need - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                cov = row.get("coverage_fraction")
                records.append(
                    RunRecord(
                        method=row["method"],
                        budget=int(row["N"]),
                        scene_id=row["scene_id"],
                        metric_value=float(row["metric"]),
                        coverage_fraction=float(cov) if cov not in (None, "") else float("nan"),
                    )
                )
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path}: line {reader.line_num}: {e}") from None
    return records


@dataclass(frozen=True)
class StabilitySummary:
    mean: float
    worst: float
    range: float
    budgets: tuple[int, ...]


def stability_summary(values_by_budget: Mapping[int, float], floor: int = 200) -> StabilitySummary:
    """Mean, worst (max) and max-min over budgets at or above ``floor``; lower values are better."""
    kept = sorted((n, v) for n, v in values_by_budget.items() if n >= floor)
    if not kept:
        raise ValueError(f"no budgets >= {floor}")
    vals = np.array([v for _, v in kept], dtype=float)
    return StabilitySummary(float(vals.mean()), float(vals.max()), float(vals.max() - vals.min()), tuple(n for n, _ in kept))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation; NaN when either input has zero variance."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("pearson needs two equal-length inputs of length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return float("nan")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("spearman needs two equal-length inputs of length >= 2")
    return pearson(rankdata(xs), rankdata(ys))


def novelty_bins(values: Sequence[float], k: int = 5) -> np.ndarray:
    """Equal-mass bins 1..k (1 = least novel).

    A value goes to bin ``floor(k * (#values strictly below it) / n) + 1``, so
    tied values share the lowest bin their block reaches.
    """
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        raise ValueError("novelty_bins needs at least one value")
    below = rankdata(v, method="min") - 1
    return (np.floor_divide(k * below.astype(np.int64), len(v)) + 1).astype(int)


@dataclass(frozen=True)
class WilcoxonResult:
    n: int  # nonzero deltas used
    median_delta: float
    mean_delta: float
    statistic: float  # W+, sum of ranks of positive deltas
    p_value: float
    method: str  # exact | normal | degenerate
    wins: int
    losses: int
    ties: int


EXACT_MAX_N = 25


def _exact_pvalue(ranks: np.ndarray, w_plus: float) -> float:
    # ranks may be half-integers under ties; count sign patterns on doubled ranks
    r2 = [int(round(2 * r)) for r in ranks]
    total = sum(r2)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in r2:
        for s in range(total, r - 1, -1):
            counts[s] += counts[s - r]
    w = int(round(2 * w_plus))
    n_patterns = 1 << len(r2)
    lower = Fraction(sum(counts[: w + 1]), n_patterns)
    upper = Fraction(sum(counts[w:]), n_patterns)
    return float(min(Fraction(1), 2 * min(lower, upper)))


def paired_wilcoxon(deltas: Sequence[float]) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on per-scene deltas.

    Zero deltas are dropped. Exact null distribution for n <= 25, otherwise
    the normal approximation with tie and continuity corrections.
    Win/loss/tie counts use the sign of each delta (win = positive).
    """
    d = np.asarray(deltas, dtype=float)
    wins, losses = int(np.sum(d > 0)), int(np.sum(d < 0))
    ties = len(d) - wins - losses
    med = float(np.median(d)) if len(d) else float("nan")
    mean = float(np.mean(d)) if len(d) else float("nan")
    nz = d[d != 0]
    n = len(nz)
    if n == 0:
        return WilcoxonResult(0, med, mean, 0.0, 1.0, "degenerate", wins, losses, ties)
    ranks = rankdata(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    if n <= EXACT_MAX_N:
        p = _exact_pvalue(ranks, w_plus)
        method = "exact"
    else:
        mu = n * (n + 1) / 4
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_counts**3 - tie_counts)) / 48
        diff = abs(w_plus - mu)
        z = max(diff - 0.5, 0.0) / math.sqrt(var)
        p = float(min(1.0, 2 * norm.sf(z)))
        method = "normal"
    return WilcoxonResult(n, med, mean, w_plus, p, method, wins, losses, ties)


def best_of(records: Sequence[RunRecord], methods: Sequence[str], label: str = "best_non_guardrail") -> list[RunRecord]:
    """Per-(scene, budget) minimum metric over ``methods``; the first listed method wins ties."""
    groups: dict[tuple[str, int], list[RunRecord]] = defaultdict(list)
    order = {m: i for i, m in enumerate(methods)}
    for r in records:
        if r.method in order:
            groups[(r.scene_id, r.budget)].append(r)
    out = []
    for (scene, n), rs in sorted(groups.items()):
        best = min(rs, key=lambda r: (r.metric_value, order[r.method]))
        out.append(RunRecord(label, n, scene, best.metric_value, best.coverage_fraction))
    return out


def method_budget_means(records: Sequence[RunRecord]) -> dict[str, dict[int, float]]:
    groups: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        groups[(r.method, r.budget)].append(r.metric_value)
    out: dict[str, dict[int, float]] = defaultdict(dict)
    for (m, n), vals in sorted(groups.items()):
        out[m][n] = float(np.mean(vals))
    return dict(out)


def scaling_table(records: Sequence[RunRecord]) -> list[dict]:
    """Mean and 95% CI half-width of the metric per (method, N), across scenes."""
    groups: dict[tuple[str, int], list[RunRecord]] = defaultdict(list)
    for r in records:
        groups[(r.method, r.budget)].append(r)
    rows = []
    for (m, n), rs in sorted(groups.items()):
        vals = np.array([r.metric_value for r in rs])
        ci = 1.96 * vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else float("nan")
        covs = [r.coverage_fraction for r in rs if not math.isnan(r.coverage_fraction)]
        rows.append(
            {
                "method": m,
                "N": n,
                "n_scenes": len(rs),
                "mean": float(vals.mean()),
                "ci95": float(ci),
                "coverage_fraction": float(np.mean(covs)) if covs else float("nan"),
            }
        )
    return rows


def stability_table(records: Sequence[RunRecord], floor: int = 200) -> list[dict]:
    rows = []
    for m, by_n in method_budget_means(records).items():
        try:
            s = stability_summary(by_n, floor)
        except ValueError:
            continue
        rows.append({"method": m, "mean": s.mean, "worst": s.worst, "range": s.range, "n_budgets": len(s.budgets)})
    rows.sort(key=lambda r: r["mean"])
    return rows


def correlation_table(records: Sequence[RunRecord]) -> list[dict]:
    """Per-method correlation between mean coverage fraction and mean metric across budgets."""
    rows = []
    by_method: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for r in scaling_table(records):
        if not math.isnan(r["coverage_fraction"]):
            by_method[r["method"]].append((r["coverage_fraction"], r["mean"]))
    for m, pts in sorted(by_method.items()):
        if len(pts) < 2:
            continue
        xs, ys = zip(*pts)
        rows.append({"method": m, "n_points": len(pts), "pearson": pearson(xs, ys), "spearman": spearman(xs, ys)})
    return rows


def paired_table(records: Sequence[RunRecord], target: str, comparators: Sequence[str]) -> list[dict]:
    """Wilcoxon of ``comparator - target`` per budget over scenes present for both.

    Metrics are lower-is-better, so a positive delta (a win) means the target
    improved on the comparator for that scene.
    """
    index = {(r.method, r.budget, r.scene_id): r.metric_value for r in records}
    budgets = sorted({r.budget for r in records if r.method == target})
    rows = []
    for n in budgets:
        for c in comparators:
            scenes = sorted(s for (m, b, s) in index if m == target and b == n and (c, n, s) in index)
            if not scenes:
                continue
            deltas = [index[(c, n, s)] - index[(target, n, s)] for s in scenes]
            w = paired_wilcoxon(deltas)
            rows.append(
                {
                    "N": n,
                    "comparator": c,
                    "n_scenes": len(scenes),
                    "median_delta": w.median_delta,
                    "mean_delta": w.mean_delta,
                    "p_value": w.p_value,
                    "method": w.method,
                    "wins": w.wins,
                    "losses": w.losses,
                    "ties": w.ties,
                }
            )
    return rows


def tail_profile(novelty: Sequence[float], errors: Sequence[float], k: int = 5) -> list[dict]:
    """Mean error per novelty quantile bin (long format, plot-ready)."""
    bins = novelty_bins(novelty, k)
    e = np.asarray(errors, dtype=float)
    if len(e) != len(bins):
        raise ValueError("novelty and error lists differ in length")
    rows = []
    for b in range(1, k + 1):
        sel = e[bins == b]
        rows.append({"bin": b, "n": int(len(sel)), "mean_error": float(sel.mean()) if len(sel) else float("nan")})
    return rows
