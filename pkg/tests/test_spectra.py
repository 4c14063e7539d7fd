import numpy as np
import pytest

from qns import (
    CompositeModel,
    FrequencyGrid,
    LorentzianParams,
    ModelKind,
    NoiseSpectrum,
    OneOverFParams,
    TimeGrid,
    ValidationError,
    eval_lorentzian,
    eval_one_over_f,
    fit_double_lorentzian,
    sample_spectrum,
)

GRID = FrequencyGrid.from_time_grid(TimeGrid.log_spaced(1e-6, 2e-3))


def test_lorentzian_at_zero_frequency():
    assert eval_lorentzian(LorentzianParams(1.0, 1.0), 0.0) == pytest.approx(1 / np.pi)


def test_lorentzian_half_maximum_at_inverse_correlation_time():
    p = LorentzianParams(1.0, 1.0)
    assert eval_lorentzian(p, 1.0) == pytest.approx(1 / (2 * np.pi))


def test_lorentzian_matches_direct_arithmetic():
    # independent scalar recomputation of the formula
    delta, tau_c, omega = 2.0, 3.0, 5.0
    expected = (delta * delta * tau_c / 3.141592653589793) * 1.0 / (1.0 + (omega * tau_c) ** 2)
    assert eval_lorentzian(LorentzianParams(delta, tau_c), omega) == pytest.approx(
        expected, rel=1e-15
    )


def test_lorentzian_rejects_bad_params():
    with pytest.raises(ValidationError):
        LorentzianParams(0.0, 1.0)
    with pytest.raises(ValidationError):
        LorentzianParams(1.0, -2.0)
    with pytest.raises(ValidationError):
        LorentzianParams(np.nan, 1.0)


def test_one_over_f_values():
    assert eval_one_over_f(OneOverFParams(1.0, 1.0), 2 * np.pi) == pytest.approx(1.0)
    assert eval_one_over_f(OneOverFParams(1.0, 0.0), 123.4) == pytest.approx(1.0)
    assert eval_one_over_f(OneOverFParams(3.0, 1.5), 4 * np.pi) == pytest.approx(3 / 2**1.5)


def test_one_over_f_rejects_zero_frequency():
    with pytest.raises(ValidationError):
        eval_one_over_f(OneOverFParams(1.0, 1.0), 0.0)


def test_lorentzian_is_strictly_decreasing_and_integrates_to_half_delta_sq():
    p = LorentzianParams(3e4, 1e-4)
    spec = sample_spectrum(CompositeModel(ModelKind.LORENTZIAN, (p,)), GRID)
    assert np.all(np.diff(spec.values) < 0)
    w = np.geomspace(1e-4 / p.tau_c, 1e6 / p.tau_c, 400_001)
    integral = np.trapezoid(eval_lorentzian(p, w), w)
    assert integral == pytest.approx(p.delta**2 / 2, rel=1e-2)


def test_sample_spectrum_additivity_is_exact():
    p1 = LorentzianParams(2e4, 3e-5)
    p2 = LorentzianParams(9e3, 2e-6)
    double = sample_spectrum(
        CompositeModel(ModelKind.DOUBLE_LORENTZIAN, (p1, p2)), GRID
    )
    s1 = sample_spectrum(CompositeModel(ModelKind.LORENTZIAN, (p1,)), GRID)
    s2 = sample_spectrum(CompositeModel(ModelKind.LORENTZIAN, (p2,)), GRID)
    assert np.array_equal(double.values, s1.values + s2.values)


def test_identical_components_double_sampling():
    p = LorentzianParams(2e4, 3e-5)
    double = sample_spectrum(CompositeModel(ModelKind.DOUBLE_LORENTZIAN, (p, p)), GRID)
    single = sample_spectrum(CompositeModel(ModelKind.LORENTZIAN, (p,)), GRID)
    assert np.allclose(double.values, 2 * single.values, rtol=1e-15)


def test_one_over_f_plus_lorentzian_sums_components():
    from qns import LorentzianFeatureParams

    base = OneOverFParams(1e6, 1.2)
    feat = LorentzianFeatureParams(5e3, 2e5, 5e4)
    combined = sample_spectrum(
        CompositeModel(ModelKind.ONE_OVER_F_PLUS_LORENTZIAN, (base, feat)), GRID
    )
    a = sample_spectrum(CompositeModel(ModelKind.ONE_OVER_F, (base,)), GRID)
    from qns.spectra import eval_lorentzian_feature

    assert np.array_equal(combined.values, a.values + eval_lorentzian_feature(feat, GRID.omega))


def test_composite_model_invariants():
    p = LorentzianParams(1e4, 1e-4)
    with pytest.raises(ValidationError):
        CompositeModel(ModelKind.DOUBLE_LORENTZIAN, (p,))
    with pytest.raises(ValidationError):
        CompositeModel(ModelKind.ONE_OVER_F_PLUS_LORENTZIAN, (p, p))


def test_spectrum_values_must_be_nonnegative():
    values = np.full(151, 1.0)
    values[3] = -0.5
    with pytest.raises(ValidationError):
        NoiseSpectrum(GRID, values)


def test_double_lorentzian_roundtrip_recovery():
    truth_low = LorentzianParams(4.2e4, 8e-4)
    truth_high = LorentzianParams(1.6e4, 4e-6)
    spec = sample_spectrum(
        CompositeModel(ModelKind.DOUBLE_LORENTZIAN, (truth_low, truth_high)), GRID
    )
    low, high, residual = fit_double_lorentzian(spec)
    assert residual < 1e-6  # noiseless round trips contract to the truth
    assert low.delta == pytest.approx(truth_low.delta, rel=1e-2)
    assert high.delta == pytest.approx(truth_high.delta, rel=1e-2)
    assert low.tau_c > high.tau_c  # ordering contract


def test_single_lorentzian_input_degenerates_second_component():
    truth = LorentzianParams(3e4, 5e-5)
    spec = sample_spectrum(CompositeModel(ModelKind.LORENTZIAN, (truth,)), GRID)
    low, high, residual = fit_double_lorentzian(spec)
    assert residual < 1e-6
    deltas = sorted([low.delta, high.delta])
    assert deltas[1] == pytest.approx(truth.delta, rel=1e-2)
    assert deltas[0] < 1e-3 * deltas[1]  # second component absorbs ~nothing


def test_depth_proxy_ordering_preserved():
    # shallower defects couple more strongly; fitted couplings must keep
    # the generated ordering
    pairs = [
        (LorentzianParams(8e4, 6e-4), LorentzianParams(4e4, 3e-6)),
        (LorentzianParams(4e4, 6e-4), LorentzianParams(2e4, 3e-6)),
        (LorentzianParams(2e4, 6e-4), LorentzianParams(1e4, 3e-6)),
    ]
    fitted = []
    for low, high in pairs:
        spec = sample_spectrum(CompositeModel(ModelKind.DOUBLE_LORENTZIAN, (low, high)), GRID)
        f_low, f_high, _ = fit_double_lorentzian(spec)
        fitted.append((f_low.delta, f_high.delta))
    lows = [f[0] for f in fitted]
    highs = [f[1] for f in fitted]
    assert lows == sorted(lows, reverse=True)
    assert highs == sorted(highs, reverse=True)


def test_sampled_spectrum_interpolation_and_extrapolation():
    # a flat sampled spectrum evaluates flat everywhere, inside and out
    spec = NoiseSpectrum(GRID, np.full(151, 7.5))
    w = np.array([GRID.omega[0] / 50, GRID.omega[70] * 1.3, GRID.omega[-1] * 200])
    assert np.allclose(spec.evaluate(w), 7.5, rtol=1e-12)
