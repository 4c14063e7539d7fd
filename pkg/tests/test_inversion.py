import numpy as np
import pytest

from qns import (
    CoherenceCurve,
    CompositeModel,
    FAST,
    FrequencyGrid,
    LorentzianFeatureParams,
    LorentzianParams,
    ModelKind,
    NoiseSpectrum,
    OneOverFParams,
    SequenceFamily,
    StretchedExpParams,
    TimeGrid,
    ValidationError,
    alvarez_suter,
    coherence_curve,
    decoherence_integral,
    default_tau_grid,
    delta_inversion,
    harmonic_sensitivities,
    phenomenological_roundtrip,
    sample_spectrum,
    stretched_decay_spectrum,
)
from qns.inversion import fit_decay_rate
from qns.sequences import cpmg

GRID = TimeGrid.log_spaced(1e-6, 2e-3)
FGRID = FrequencyGrid.from_time_grid(GRID)


def test_delta_inversion_of_unit_coherence_is_zero():
    curve = CoherenceCurve(grid=GRID, coherence=np.ones(151))
    spec = delta_inversion(curve, 1)
    assert np.all(spec.values == 0.0)
    assert spec.clamp_count == 151


def test_delta_inversion_single_point_value():
    # C(t) = 1/e at t -> S(pi/t) = pi/t
    grid = TimeGrid.log_spaced(1e-2, 20.0)
    curve = CoherenceCurve(grid=grid, coherence=np.full(151, np.exp(-1.0)))
    spec = delta_inversion(curve, 1)
    assert np.allclose(spec.values, np.pi / grid.times[::-1], rtol=1e-12)


def test_delta_inversion_overestimates_white_noise_by_pi_over_two():
    s0 = 2000.0
    chi = np.minimum(s0 * GRID.times / 2, -np.log(1e-9))
    curve = CoherenceCurve(grid=GRID, coherence=np.exp(-chi))
    spec = delta_inversion(curve, 1)
    mask = chi < -np.log(1e-9) - 1e-9  # below the storage floor cap
    expected = np.pi * s0 / 2
    assert np.allclose(spec.values[::-1][mask], expected, rtol=1e-12)


def test_delta_inversion_is_exact_for_spike_kernel_data():
    # synthesize C from the spike identity itself: ln C = -t S(n pi/t)/pi
    n = 4
    fgrid = FrequencyGrid.from_time_grid(GRID, n)
    truth = sample_spectrum(
        CompositeModel(ModelKind.LORENTZIAN, (LorentzianParams(5e4, 2e-5),)), fgrid
    )
    s_at_probe = truth.values[::-1]  # aligned with ascending time
    chi = GRID.times * s_at_probe / np.pi
    curve = CoherenceCurve(grid=GRID, coherence=np.exp(-np.minimum(chi, 700)))
    recovered = delta_inversion(curve, n)
    assert np.allclose(recovered.values, truth.values, rtol=1e-12)
    assert np.array_equal(recovered.grid.omega, fgrid.omega)


def test_delta_inversion_clamps_noisy_overshoot():
    coherence = np.full(151, 0.5)
    coherence[10] = 1.0
    curve = CoherenceCurve(grid=GRID, coherence=coherence)
    spec = delta_inversion(curve, 1)
    assert spec.clamp_count == 1
    assert np.all(spec.values >= 0)


def test_stretched_decay_spectrum_closed_form():
    params = StretchedExpParams(t2=3e-4, power=1.8)
    spec = stretched_decay_spectrum(params, GRID, 1)
    w = spec.grid.omega
    expected = np.pi * np.pi ** (1.8 - 1) * 3e-4 ** (-1.8) * w ** (1 - 1.8)
    assert np.allclose(spec.values, expected, rtol=1e-12)
    # equivalently: the delta inversion of the exact phenomenological curve
    t = GRID.times
    direct = np.pi * (t / 3e-4) ** 1.8 / t
    assert np.allclose(spec.values, direct[::-1], rtol=1e-12)


def test_phenomenological_roundtrip_is_self_consistent():
    params = StretchedExpParams(t2=3e-4, power=1.0)
    spectrum, curve = phenomenological_roundtrip(params, GRID, SequenceFamily("hahn"))
    # the pair satisfies the decoherence integral by construction
    for idx in (40, 90, 130):
        seq = cpmg(1, GRID.times[idx])
        chi = decoherence_integral(spectrum, seq, config=FAST)
        assert curve.chi[idx] == pytest.approx(min(chi, -np.log(1e-9)), rel=1e-9)


def test_phenomenological_roundtrip_under_32_pulse_family():
    params = StretchedExpParams(t2=3e-4, power=1.4)
    spectrum, curve = phenomenological_roundtrip(params, GRID, SequenceFamily("cpmg", 32))
    assert curve.sequence_family == "cpmg:32"
    assert np.array_equal(spectrum.grid.omega, FrequencyGrid.from_time_grid(GRID, 32).omega)
    chi = decoherence_integral(spectrum, cpmg(32, GRID.times[100]), config=FAST)
    assert curve.chi[100] == pytest.approx(chi, rel=1e-9)


def test_sensitivities_have_only_odd_harmonics_and_match_ideal_weights():
    sens = harmonic_sensitivities(1e-5, n_ref=128, k_max=7)
    assert set(sens.coefficients) == {1, 3, 5, 7}
    for k, a_sq in sens.coefficients.items():
        assert a_sq == pytest.approx(4 / (np.pi**2 * k**2), rel=2e-2)


def test_sensitivities_are_delay_invariant():
    values = [
        harmonic_sensitivities(tau, n_ref=128, k_max=1).coefficients[1]
        for tau in (1e-6, 1e-5, 1e-3)
    ]
    assert max(values) - min(values) <= 1e-2 * values[0]


def test_sensitivity_sum_rule_against_white_noise_rate():
    # R = S0/2 for white noise; the tiled windows recover it once the
    # harmonic ladder is tall enough
    sens = harmonic_sensitivities(1e-5, n_ref=128, k_max=41)
    total = sum(sens.coefficients.values())
    assert total == pytest.approx(0.5, rel=2e-2)


def test_sensitivities_reject_unresolvable_reference_train():
    with pytest.raises(ValidationError):
        harmonic_sensitivities(1e-5, n_ref=8, k_max=7)


def test_fit_decay_rate_through_origin():
    times = np.array([1e-5, 2e-5, 4e-5])
    rate, resid = fit_decay_rate(times, 3000.0 * times)
    assert rate == pytest.approx(3000.0, rel=1e-12)
    assert resid == pytest.approx(0.0, abs=1e-12)


def test_alvarez_suter_white_noise_flat_reconstruction():
    s0 = 5e3
    white = NoiseSpectrum(FGRID, np.full(151, s0))
    rec = alvarez_suter(white, k_max=15, config=FAST)
    assert np.max(np.abs(rec.values - s0) / s0) < 0.05
    assert rec.clamp_count == 0


def test_alvarez_suter_single_delay_reduces_to_normalized_spike_map():
    # with one delay and k_max = 1 the solve collapses to S = R / A_1^2,
    # which is the spike map of the same decays up to the A_1^2 factor
    s0 = 4e3
    white = NoiseSpectrum(FGRID, np.full(151, s0))
    tau = 1e-5
    sens = harmonic_sensitivities(tau, k_max=1)
    chis, times = [], []
    for n in (4, 8, 16, 32, 64):
        chis.append(decoherence_integral(white, cpmg(n, n * tau), config=FAST))
        times.append(n * tau)
    rate, _ = fit_decay_rate(times, chis)
    assert rate == pytest.approx(s0 / 2, rel=1e-3)
    estimate_as = rate / sens.coefficients[1]
    # spike map applied to the same decays: S_delta = -pi ln C / T = pi R
    estimate_delta = np.pi * rate
    assert estimate_as / estimate_delta == pytest.approx(
        1.0 / (np.pi * sens.coefficients[1]), rel=1e-12
    )


def test_alvarez_suter_requires_band_coverage():
    white = NoiseSpectrum(FGRID, np.full(151, 1e3))
    with pytest.raises(ValidationError):
        alvarez_suter(white, tau_grid=np.geomspace(1e-5, 1e-4, 5), config=FAST)


def test_alvarez_suter_captures_nonmonotonic_feature():
    model = CompositeModel(
        ModelKind.ONE_OVER_F_PLUS_LORENTZIAN,
        (OneOverFParams(1.2e7, 1.0), LorentzianFeatureParams(4e3, 2e5, 6e4)),
    )
    spec = sample_spectrum(model, FGRID)
    rec = alvarez_suter(spec, config=FAST)
    err_as = np.mean(np.abs(rec.values - spec.values) / spec.values)
    curve = coherence_curve(spec, SequenceFamily("hahn"), GRID, config=FAST)
    delta = delta_inversion(curve, 1)
    err_delta = np.mean(np.abs(delta.values - spec.values) / spec.values)
    assert err_as < err_delta
    from helpers import local_maxima

    truth_peaks = local_maxima(spec.values)
    rec_peaks = local_maxima(rec.values)
    assert truth_peaks and rec_peaks
    assert min(abs(a - b) for a in truth_peaks for b in rec_peaks) <= 1


def test_alvarez_suter_output_nonnegative_with_clamp_counting():
    values = np.full(151, 1.0)  # nearly-zero spectrum drives negatives
    spec = NoiseSpectrum(FGRID, values)
    rec = alvarez_suter(spec, config=FAST)
    assert np.all(rec.values >= 0)
    assert rec.clamp_count >= 0
