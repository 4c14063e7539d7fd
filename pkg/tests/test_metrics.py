import numpy as np
import pytest

from qns import (
    CoherenceCurve,
    CompositeModel,
    FrequencyGrid,
    LorentzianParams,
    ModelKind,
    NoiseSpectrum,
    SequenceFamily,
    StretchedExpParams,
    TimeGrid,
    ValidationError,
    build_report,
    coherence_curve,
    load_report,
    log_curve_error,
    sample_spectrum,
    spectrum_error,
    stretched_exp_fit,
    stretched_exponential,
    write_report,
)

GRID = TimeGrid.log_spaced(1e-6, 2e-3)
FGRID = FrequencyGrid.from_time_grid(GRID)


def test_spectrum_error_trivial_cases():
    truth = NoiseSpectrum(FGRID, np.full(151, 100.0))
    assert spectrum_error(truth, truth) == 0.0
    pred = NoiseSpectrum(FGRID, 0.9 * truth.values)
    assert spectrum_error(pred, truth) == pytest.approx(10.0, rel=1e-12)


def test_spectrum_error_rejects_grid_mismatch():
    truth = NoiseSpectrum(FGRID, np.full(151, 100.0))
    other_grid = FrequencyGrid.from_time_grid(TimeGrid.log_spaced(1e-6, 1e-3))
    pred = NoiseSpectrum(other_grid, np.full(151, 100.0))
    with pytest.raises(ValidationError):
        spectrum_error(pred, truth)


def test_log_curve_error_trivial_and_power_scaling():
    curve = stretched_exponential(StretchedExpParams(3e-4, 1.2), GRID)
    assert log_curve_error(curve, curve) == 0.0
    # C^1.1 scales ln C by 1.1 -> 10% everywhere chi is above the floor
    powered = CoherenceCurve(grid=GRID, coherence=curve.coherence ** 1.1)
    chi = -np.log(curve.coherence)
    if np.all(chi >= 0.05):
        assert log_curve_error(powered, curve) == pytest.approx(10.0, rel=1e-9)
    else:
        expected = 100 * np.mean(0.1 * chi / np.maximum(chi, 0.05))
        assert log_curve_error(powered, curve) == pytest.approx(expected, rel=1e-9)


def test_stretched_fit_recovers_exact_curve():
    truth = StretchedExpParams(t2=2.4e-4, power=1.6)
    curve = stretched_exponential(truth, GRID)
    params, fitted, residual = stretched_exp_fit(curve.coherence, GRID)
    assert residual < 1e-8
    assert params.t2 == pytest.approx(truth.t2, rel=1e-6)
    assert params.power == pytest.approx(truth.power, rel=1e-6)


def test_stretched_fit_misfits_structured_decay():
    # a two-timescale decay leaves a structured residual
    model = CompositeModel(
        ModelKind.DOUBLE_LORENTZIAN,
        (LorentzianParams(3.3e4, 2e-3), LorentzianParams(3.6e4, 2e-6)),
    )
    spec = sample_spectrum(model, FGRID)
    curve = coherence_curve(spec, SequenceFamily("hahn"), GRID)
    params, fitted, residual = stretched_exp_fit(curve.coherence, GRID)
    assert residual > 1e-4


def test_stretched_fit_recovers_t2_under_noise():
    rng = np.random.default_rng(0)
    truth = StretchedExpParams(t2=3e-4, power=1.3)
    clean = stretched_exponential(truth, GRID).coherence
    recovered = []
    for _ in range(100):
        noisy = np.clip(clean + rng.uniform(-0.05, 0.05, clean.shape), 1e-9, 1.05)
        params, _, _ = stretched_exp_fit(noisy, GRID)
        recovered.append(params.t2)
    assert np.mean(np.abs(np.array(recovered) - truth.t2) / truth.t2) < 0.05


def test_report_single_record():
    report = build_report(["a"], ["fam"], np.array([3.5]))
    mean, sd, count, mx = report.family_stats["fam"]
    assert mean == 3.5 and sd == 0.0 and count == 1 and mx == 3.5
    assert report.exemplar_ids["fam"] == "a"


def test_report_statistics_are_consistent():
    rng = np.random.default_rng(1)
    errors = rng.uniform(0, 50, 200)
    families = ["f1"] * 120 + ["f2"] * 80
    ids = [f"r{i}" for i in range(200)]
    report = build_report(ids, families, errors)
    for fam in ("f1", "f2"):
        mask = np.array([f == fam for f in families])
        mean, sd, count, mx = report.family_stats[fam]
        assert mean == pytest.approx(errors[mask].mean(), rel=1e-12)
        assert sd == pytest.approx(errors[mask].std(), rel=1e-12)
        assert mx == errors[mask].max()  # max is always reported, tails clip only
        assert report.histogram[fam].sum() == count


def test_median_exemplar_is_50th_percentile_record():
    errors = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    report = build_report(list("abcde"), ["f"] * 5, errors)
    assert report.exemplar_ids["f"] == "c"


def test_report_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    errors = rng.uniform(0, 30, 60)
    families = ["alpha"] * 30 + ["beta"] * 30
    ids = [f"r{i}" for i in range(60)]
    report = build_report(ids, families, errors)
    write_report(report, str(tmp_path))
    loaded = load_report(str(tmp_path))
    assert loaded.record_ids == report.record_ids
    assert np.array_equal(loaded.errors, report.errors)
    assert loaded.family_stats == report.family_stats
    for fam in report.histogram:
        assert np.array_equal(loaded.histogram[fam], report.histogram[fam])
    assert loaded.exemplar_ids == report.exemplar_ids


def test_report_rejects_empty_input():
    with pytest.raises(ValidationError):
        build_report([], [], np.array([]))
