"""Evaluation metrics, the stretched-exponential fitting baseline, and
CSV report emission (summary tables, stacked error histograms, and
percentile exemplar records)."""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitFailure, ValidationError
from .grids import CHI_CAP, TimeGrid
from .simulate import CoherenceCurve, StretchedExpParams, stretched_exponential
from .spectra import NoiseSpectrum
from .validation import require

MAPE_EPS_FRACTION = 1e-12


def _mape(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    require(pred.shape == truth.shape, "pred and truth shapes differ")
    peak = np.max(np.abs(truth))
    if peak == 0:
        raise ValidationError("truth vector is identically zero")
    denom = np.maximum(np.abs(truth), MAPE_EPS_FRACTION * peak)
    return float(np.mean(np.abs(pred - truth) / denom) * 100.0)


def spectrum_error(pred: NoiseSpectrum, truth: NoiseSpectrum) -> float:
    """Mean absolute percentage error between spectra on one grid."""
    if not np.array_equal(pred.grid.omega, truth.grid.omega):
        raise ValidationError("spectra live on different frequency grids")
    return _mape(pred.values, truth.values)


LOG_C_NOISE_FLOOR = 0.05


def log_curve_error(
    pred: CoherenceCurve, truth: CoherenceCurve, denominator_floor: float = LOG_C_NOISE_FLOOR
) -> float:
    """MAPE between ln C values; the spectrum depends on the decay only
    through ln C, so errors are compared there.

    Denominators are floored at ``denominator_floor`` (default: the
    +-5% measurement-noise amplitude, which is also the ln C uncertainty
    near C = 1).  Early-time points with |ln C| below the noise scale
    carry no measurable decay, and without the floor they dominate the
    metric by three to four orders of magnitude.
    """
    if not np.array_equal(pred.grid.times, truth.grid.times):
        raise ValidationError("curves live on different time grids")
    if not (np.all(pred.coherence > 0) and np.all(truth.coherence > 0)):
        raise ValidationError("log error needs strictly positive coherences")
    log_p = np.log(pred.coherence)
    log_t = np.log(truth.coherence)
    denom = np.maximum(np.abs(log_t), denominator_floor)
    return float(np.mean(np.abs(log_p - log_t) / denom) * 100.0)


def stretched_exp_fit(curve_values, grid: TimeGrid, max_nfev: int = 2000):
    """Least-squares stretched-exponential fit of a (possibly noisy) decay.

    Seeds (T2, p) by log-log linearization of -ln C on the usable points,
    then refines on the plain coherence residuals.  Returns
    ``(params, fitted_curve, residual_rms)``.
    """
    values = np.asarray(curve_values, dtype=float)
    t = grid.times
    require(values.shape == t.shape, "curve length does not match the grid")
    require(np.all(values > 0), "coherence values must be positive")

    usable = (values < 0.999) & (values > 1e-6)
    if np.count_nonzero(usable) >= 3:
        log_chi = np.log(-np.log(values[usable]))
        log_t = np.log(t[usable])
        slope, intercept = np.polyfit(log_t, log_chi, 1)
        p0 = float(np.clip(slope, 0.05, 6.0))
        t2_0 = float(np.exp(-intercept / max(slope, 1e-3)))
        t2_0 = float(np.clip(t2_0, t[0] * 1e-3, t[-1] * 1e3))
    else:
        p0, t2_0 = 1.0, float(np.sqrt(t[0] * t[-1]))

    def resid(theta):
        log_t2, log_p = theta
        chi = np.minimum((t / np.exp(log_t2)) ** np.exp(log_p), CHI_CAP)
        return np.exp(-chi) - values

    try:
        res = least_squares(
            resid, np.array([np.log(t2_0), np.log(p0)]), method="lm", max_nfev=max_nfev
        )
    except Exception as exc:
        raise FitFailure(f"stretched-exponential fit failed: {exc}") from exc
    t2, p = float(np.exp(res.x[0])), float(np.exp(res.x[1]))
    if not (np.isfinite(t2) and np.isfinite(p)):
        raise FitFailure(
            "stretched-exponential fit diverged",
            best_params=(t2_0, p0),
            residual=float(np.sqrt(np.mean(res.fun**2))),
        )
    params = StretchedExpParams(t2=t2, power=p)
    fitted = stretched_exponential(params, grid)
    return params, fitted, float(np.sqrt(np.mean(res.fun**2)))


@dataclass
class ErrorReport:
    """Per-record errors with per-family statistics and histograms."""

    record_ids: list
    families: list
    errors: np.ndarray
    family_stats: dict = field(default_factory=dict)  # family -> (mean, sd, count, max)
    bin_edges: np.ndarray | None = None
    histogram: dict = field(default_factory=dict)  # family -> counts per bin
    exemplar_ids: dict = field(default_factory=dict)  # family -> id at median error

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))


def _median_exemplar(ids, errors):
    order = np.argsort(errors, kind="stable")
    return ids[order[len(order) // 2]]


def build_report(record_ids, families, errors, n_bins: int = 50) -> ErrorReport:
    """Assemble per-family statistics, histogram, and median exemplars.

    Histogram bins are uniform from 0 to the 99th-percentile error with
    one overflow bin; the per-record list stays complete so clipped
    tails lose nothing.
    """
    errors = np.asarray(errors, dtype=float)
    require(errors.size >= 1, "empty error set")
    require(len(record_ids) == errors.size == len(families), "mismatched report inputs")
    report = ErrorReport(list(record_ids), list(families), errors)
    hi = float(np.percentile(errors, 99.0))
    if hi <= 0:
        hi = max(float(errors.max()), 1e-12)
    edges = np.linspace(0.0, hi, n_bins + 1)
    report.bin_edges = np.append(edges, np.inf)
    for family in sorted(set(families)):
        mask = np.array([f == family for f in families])
        errs = errors[mask]
        ids = [i for i, m in zip(record_ids, mask) if m]
        report.family_stats[family] = (
            float(errs.mean()),
            float(errs.std()),
            int(errs.size),
            float(errs.max()),
        )
        counts, _ = np.histogram(errs, report.bin_edges)
        report.histogram[family] = counts
        report.exemplar_ids[family] = _median_exemplar(ids, errs)
    return report


def write_report(report: ErrorReport, out_dir: str) -> dict:
    """Emit summary.csv, histogram.csv, percentiles.csv, and errors.csv."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "summary": os.path.join(out_dir, "summary.csv"),
        "histogram": os.path.join(out_dir, "histogram.csv"),
        "percentiles": os.path.join(out_dir, "percentiles.csv"),
        "errors": os.path.join(out_dir, "errors.csv"),
    }
    with open(paths["summary"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "mean_pct", "sigma_pct", "count", "max_pct"])
        for family, (mean, sd, count, mx) in sorted(report.family_stats.items()):
            writer.writerow([family, repr(mean), repr(sd), count, repr(mx)])
    families = sorted(report.histogram)
    with open(paths["histogram"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi"] + [f"count_{f}" for f in families])
        for i in range(len(report.bin_edges) - 1):
            row = [repr(float(report.bin_edges[i])), repr(float(report.bin_edges[i + 1]))]
            row += [int(report.histogram[f][i]) for f in families]
            writer.writerow(row)
    with open(paths["percentiles"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "percentile", "record_id"])
        for family in families:
            writer.writerow([family, 50, report.exemplar_ids[family]])
    with open(paths["errors"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "family", "error_pct"])
        for rid, fam, err in zip(report.record_ids, report.families, report.errors):
            writer.writerow([rid, fam, repr(float(err))])
    return paths


def load_report(out_dir: str) -> ErrorReport:
    """Rebuild a report from its CSV files (exact float round trip)."""
    with open(os.path.join(out_dir, "errors.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["record_id"] for r in rows]
    families = [r["family"] for r in rows]
    errors = np.array([float(r["error_pct"]) for r in rows])
    with open(os.path.join(out_dir, "histogram.csv"), newline="") as fh:
        hrows = list(csv.DictReader(fh))
    edges = [float(r["bin_lo"]) for r in hrows] + [float(hrows[-1]["bin_hi"])]
    report = build_report(ids, families, errors)
    report.bin_edges = np.array(edges)
    for fam in sorted(set(families)):
        counts = np.array([int(r[f"count_{fam}"]) for r in hrows])
        report.histogram[fam] = counts
    with open(os.path.join(out_dir, "percentiles.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            report.exemplar_ids[row["family"]] = row["record_id"]
    with open(os.path.join(out_dir, "summary.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            report.family_stats[row["family"]] = (
                float(row["mean_pct"]),
                float(row["sigma_pct"]),
                int(row["count"]),
                float(row["max_pct"]),
            )
    return report


def plot_report(out_dir: str, show: bool = False):
    """Optional matplotlib rendering of an emitted report (plot hook)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = load_report(out_dir)
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = report.bin_edges[:-1]
    bottom = np.zeros(len(edges) - 1)
    for family, counts in sorted(report.histogram.items()):
        finite = counts[:-1]
        ax.bar(
            edges[:-1],
            finite,
            width=np.diff(edges),
            bottom=bottom,
            align="edge",
            label=family,
        )
        bottom = bottom + finite
    ax.set_xlabel("error (%)")
    ax.set_ylabel("count")
    ax.legend()
    path = os.path.join(out_dir, "histogram.png")
    fig.savefig(path, dpi=120)
    if show:
        plt.show()
    plt.close(fig)
    return path
