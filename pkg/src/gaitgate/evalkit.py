"""Offline analysis: agreement statistics, parameter sweeps, threshold search,
outcome summaries, and regression — everything needed to evaluate detection
quality on labeled corpora and recorded trial logs.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gaitgate.core import (
    DetectionParams,
    ReferenceUnavailableError,
    baseline_threshold_detect,
    compute_gait_speed,
    offline_reference_edges,
)
from gaitgate.session import Classification, load_trials
from gaitgate.simulate import Capture, ENTRY_PORT, EXIT_PORT

# Reference outcomes from the original clinical deployment of the hardware
# system this package models, kept for side-by-side reporting. They are not
# reproducible from synthetic corpora (they depend on recorded patient trials)
# and are deliberately not asserted anywhere.
CLINICAL_REFERENCE = {
    "maeMps": 0.064,
    "biasMps": 0.061,
    "loaMps": (-0.070, 0.191),
    "successRate": 0.877,
}


@dataclass(frozen=True)
class PairedMeasurement:
    """One (system output, reference) speed pair."""

    v_test_mps: float
    v_ref_mps: float
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.v_test_mps <= 0 or self.v_ref_mps <= 0:
            raise ValueError("both speeds must be > 0")


def error_pct(v_measured: float, v_ref: float) -> float:
    """Absolute relative measurement error, in percent."""
    if v_ref <= 0:
        raise ValueError("v_ref must be > 0")
    return abs((v_measured - v_ref) / v_ref) * 100.0


def mae(pairs: Sequence[PairedMeasurement]) -> float:
    if not pairs:
        raise ValueError("mae requires at least one pair")
    return statistics.mean(abs(p.v_test_mps - p.v_ref_mps) for p in pairs)


@dataclass(frozen=True)
class AgreementReport:
    mae_mps: float
    mean_error_pct: float
    bias_mps: float
    loa_low_mps: float
    loa_high_mps: float
    n: int
    points: tuple = field(default=())  # (mean, diff) per pair, for plotting


def bland_altman(pairs: Sequence[PairedMeasurement]) -> AgreementReport:
    """Agreement between methods: bias and 95% limits of agreement.

    Bias is the mean signed difference test - reference; the limits are
    bias +/- 1.96 sample standard deviations (n-1 denominator).
    """
    if len(pairs) < 2:
        raise ValueError("bland_altman requires at least two pairs")
    diffs = [p.v_test_mps - p.v_ref_mps for p in pairs]
    bias = statistics.mean(diffs)
    sd = statistics.stdev(diffs)  # n-1 denominator
    points = tuple(((p.v_test_mps + p.v_ref_mps) / 2, d)
                   for p, d in zip(pairs, diffs))
    return AgreementReport(
        mae_mps=mae(pairs),
        mean_error_pct=statistics.mean(
            error_pct(p.v_test_mps, p.v_ref_mps) for p in pairs),
        bias_mps=bias,
        loa_low_mps=bias - 1.96 * sd,
        loa_high_mps=bias + 1.96 * sd,
        n=len(pairs),
        points=points,
    )


# ---------------------------------------------------------------------------
# Corpus evaluation: proposed pipeline and fixed-threshold baseline
# ---------------------------------------------------------------------------

def measure_capture(cap: Capture, params: DetectionParams) -> float:
    """Run the offline detection pipeline on one capture; raises when the
    edges cannot be found."""
    t1, t2 = offline_reference_edges(cap.trace(ENTRY_PORT),
                                     cap.trace(EXIT_PORT), params)
    return compute_gait_speed(t1, t2, params.distance_m)


def evaluate_corpus(
    corpus: Sequence[Capture], params: DetectionParams
) -> tuple[list[PairedMeasurement], int]:
    """Measure every walk; returns (successful pairs, attempted count)."""
    pairs = []
    for cap in corpus:
        try:
            v = measure_capture(cap, params)
        except (ReferenceUnavailableError, ValueError):
            continue
        pairs.append(PairedMeasurement(v, cap.truth.true_speed_mps))
    return pairs, len(corpus)


def baseline_measure(cap: Capture, threshold_dbm: float) -> Optional[float]:
    """Fixed-threshold timing: last entry crossing, first exit crossing."""
    trace1 = cap.trace(ENTRY_PORT)
    trace2 = cap.trace(EXIT_PORT)
    if not trace2:
        return None
    first_exit_us = trace2[0].timestamp_us
    entry = [s for s in trace1 if s.timestamp_us < first_exit_us]
    t_start = baseline_threshold_detect(entry, threshold_dbm, "reverse")
    t_end = baseline_threshold_detect(trace2, threshold_dbm, "forward")
    if t_start is None or t_end is None or t_end <= t_start:
        return None
    distance = cap.header.get("params", {}).get("distance_m", 4.0)
    return compute_gait_speed(t_start, t_end, distance)


@dataclass(frozen=True)
class SweepCell:
    w: int
    tau: float
    mean_error_pct: float  # NaN when no walk succeeded
    success_fraction: float


def parameter_sweep(
    corpus: Sequence[Capture],
    w_values: Sequence[int],
    tau_values: Sequence[float],
    params: DetectionParams = DetectionParams(),
) -> list[SweepCell]:
    """Grid evaluation of window size and drop threshold over a corpus.

    Failed walks lower success_fraction and are excluded from the mean.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    cells = []
    for w in w_values:
        for tau in tau_values:
            cell_params = DetectionParams(
                w1=w, w2=w, tau1=tau, tau2=tau, distance_m=params.distance_m)
            pairs, attempted = evaluate_corpus(corpus, cell_params)
            mean_err = (statistics.mean(
                error_pct(p.v_test_mps, p.v_ref_mps) for p in pairs)
                if pairs else math.nan)
            cells.append(SweepCell(
                w=w, tau=tau, mean_error_pct=mean_err,
                success_fraction=len(pairs) / attempted))
    return cells


@dataclass(frozen=True)
class ThresholdRow:
    threshold_dbm: float
    mae_mps: float            # NaN when no walk succeeded
    mean_error_pct: float     # NaN when no walk succeeded
    success_count: int
    success_fraction: float


def threshold_search(
    corpus: Sequence[Capture],
    range_dbm: tuple[float, float] = (-70.0, -40.0),
    step_dbm: float = 1.0,
) -> list[ThresholdRow]:
    """Exhaustive fixed-threshold baseline evaluation, ranked by MAE.

    Thresholds that never succeed sort to the bottom.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    low, high = range_dbm
    if step_dbm <= 0 or high < low:
        raise ValueError("invalid threshold range")
    count = int(round((high - low) / step_dbm)) + 1
    rows = []
    for i in range(count):
        theta = low + i * step_dbm
        pairs = []
        for cap in corpus:
            v = baseline_measure(cap, theta)
            if v is not None:
                pairs.append(PairedMeasurement(v, cap.truth.true_speed_mps))
        if pairs:
            row = ThresholdRow(
                threshold_dbm=theta,
                mae_mps=mae(pairs),
                mean_error_pct=statistics.mean(
                    error_pct(p.v_test_mps, p.v_ref_mps) for p in pairs),
                success_count=len(pairs),
                success_fraction=len(pairs) / len(corpus),
            )
        else:
            row = ThresholdRow(theta, math.nan, math.nan, 0, 0.0)
        rows.append(row)
    rows.sort(key=lambda r: (math.isnan(r.mae_mps), r.mae_mps))
    return rows


# ---------------------------------------------------------------------------
# Trial-log outcome summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutcomeSummary:
    n: int
    success: int
    erroneous: int
    system_failure: int
    excluded: int  # operator-annotated, from the sidecar file

    @property
    def percentages(self) -> dict:
        if self.n == 0:
            return {"success": 0.0, "erroneous": 0.0, "systemFailure": 0.0}
        return {
            "success": 100.0 * self.success / self.n,
            "erroneous": 100.0 * self.erroneous / self.n,
            "systemFailure": 100.0 * self.system_failure / self.n,
        }


def success_summary(trial_log: Path,
                    sidecar: Optional[Path] = None) -> OutcomeSummary:
    """Tabulate trial outcomes from a log file.

    Excluded trials cannot be detected automatically; they are supplied by
    the operator in a JSON sidecar file of the form {"excluded": <count>}.
    """
    trials = load_trials(trial_log)
    counts = {c: 0 for c in Classification}
    for t in trials:
        counts[t.classification] += 1
    excluded = 0
    if sidecar is not None and sidecar.exists():
        excluded = int(json.loads(sidecar.read_text()).get("excluded", 0))
    return OutcomeSummary(
        n=len(trials),
        success=counts[Classification.SUCCESS],
        erroneous=counts[Classification.ERRONEOUS],
        system_failure=counts[Classification.SYSTEM_FAILURE],
        excluded=excluded,
    )


# ---------------------------------------------------------------------------
# Linear regression with a 95% confidence band
# ---------------------------------------------------------------------------

# two-sided 97.5% Student-t quantiles for small degrees of freedom;
# beyond the table the normal quantile is an adequate approximation
_T_975 = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447,
          7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228, 12: 2.179, 15: 2.131,
          20: 2.086, 25: 2.060, 30: 2.042, 40: 2.021, 60: 2.000, 120: 1.980}


def _t_quantile(df: int) -> float:
    if df <= 0:
        raise ValueError("df must be positive")
    keys = sorted(_T_975)
    for k in keys:
        if df <= k:
            return _T_975[k]
    return 1.96


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_stderr: float
    residual_sd: float
    n: int

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def slope_ci(self) -> tuple[float, float]:
        half = _t_quantile(self.n - 2) * self.slope_stderr
        return self.slope - half, self.slope + half

    def confidence_band(self, x_grid) -> tuple[np.ndarray, np.ndarray]:
        """95% confidence band of the mean response over x_grid."""
        x_grid = np.asarray(x_grid, dtype=float)
        half = (_t_quantile(self.n - 2) * self.residual_sd
                * np.sqrt(1.0 / self.n
                          + (x_grid - self._x_mean) ** 2 / self._sxx))
        y = self.predict(x_grid)
        return y - half, y + half

    # populated by linear_fit
    _x_mean: float = 0.0
    _sxx: float = 1.0


def linear_fit(points: Sequence[tuple[float, float]]) -> LinearFit:
    """Ordinary least squares over (x, y) points."""
    if len(points) < 3:
        raise ValueError("linear_fit requires at least three points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0:
        raise ValueError("x values are degenerate (all equal)")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (slope * x + intercept)
    df = len(points) - 2
    residual_sd = float(np.sqrt(np.sum(residuals ** 2) / df)) if df else 0.0
    slope_stderr = residual_sd / math.sqrt(sxx)
    return LinearFit(slope=slope, intercept=intercept,
                     slope_stderr=slope_stderr, residual_sd=residual_sd,
                     n=len(points), _x_mean=float(x.mean()), _sxx=sxx)


# ---------------------------------------------------------------------------
# Columnar plot-data emission
# ---------------------------------------------------------------------------

def write_table(path: Path, columns: Sequence[str],
                rows: Sequence[Sequence]) -> None:
    """Write a simple comma-separated data file with a header line."""
    with path.open("w", encoding="utf-8") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
