import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qns import PulseSequence, SequenceFamily, ValidationError, cpmg, filter_function, hahn, udd


def test_hahn_midpoint():
    seq = hahn(1.0)
    assert np.allclose(seq.centers, [0.5])
    assert seq.n == 1


def test_hahn_with_finite_pulse_duration():
    seq = hahn(100e-6, 100e-9)
    assert np.allclose(seq.centers, [50e-6])
    assert seq.centers[0] - seq.pi_duration / 2 > 0
    assert seq.centers[-1] + seq.pi_duration / 2 < seq.total_time


def test_hahn_too_short_raises():
    with pytest.raises(ValidationError):
        hahn(1e-7, 1e-7)


def test_cpmg_positions():
    assert np.allclose(cpmg(1, 1.0).centers, [0.5])
    assert np.allclose(cpmg(2, 4.0).centers, [1.0, 3.0])


def test_cpmg_32_uniform_gaps():
    seq = cpmg(32, 320e-6, 100e-9)
    assert seq.n == 32
    gaps = np.diff(seq.centers)
    assert np.allclose(gaps, 320e-6 / 32, rtol=1e-12)
    # brute-force invariant check
    half = seq.pi_duration / 2
    assert seq.centers[0] - half > 0
    assert seq.centers[-1] + half < seq.total_time
    assert np.all(gaps >= seq.pi_duration)


def test_cpmg_overlap_raises():
    with pytest.raises(ValidationError):
        cpmg(10, 1e-6, 2e-7)  # gaps 1e-7 < pi duration


def test_udd_small_n_matches_cpmg():
    assert np.allclose(udd(1, 1.0).centers, [0.5])
    assert np.allclose(udd(2, 1.0).centers, [0.25, 0.75])
    for n in (1, 2):
        assert np.allclose(udd(n, 3e-4).centers, cpmg(n, 3e-4).centers)


def test_udd_32_symmetric_and_increasing():
    seq = udd(32, 1.0)
    assert np.all(np.diff(seq.centers) > 0)
    assert np.allclose(seq.centers + seq.centers[::-1], 1.0, rtol=0, atol=1e-12)


def test_filter_function_zero_frequency_vanishes():
    for seq in (hahn(1.0), cpmg(2, 1.0), cpmg(5, 1.0), udd(7, 1.0)):
        assert filter_function(seq, 0.0) == 0.0


def test_hahn_filter_closed_form():
    seq = hahn(2e-4)
    w = np.linspace(0.05, 50, 1000) / seq.total_time
    expected = 16 * np.sin(w * seq.total_time / 4) ** 4
    got = filter_function(seq, w)
    assert np.allclose(got, expected, rtol=1e-11, atol=1e-20)


def test_hahn_value_at_2pi():
    seq = hahn(1.0)
    assert filter_function(seq, 2 * np.pi) == pytest.approx(16.0, rel=1e-12)


def test_cpmg4_matches_independent_complex_arithmetic():
    # scalar reimplementation with cmath, finite pulse duration included
    tau_pi = 100e-9
    for t in (20e-6, 150e-6):
        seq = cpmg(4, t, tau_pi)
        for i in range(10):
            w = (0.5 + i) * np.pi / t
            acc = 1.0 + (-1) ** (4 + 1) * cmath.exp(1j * w * t)
            for k, tk in enumerate(seq.centers, start=1):
                acc += 2 * (-1) ** k * cmath.exp(1j * w * tk) * np.cos(w * tau_pi / 2)
            assert filter_function(seq, w) == pytest.approx(abs(acc) ** 2, rel=1e-10)


def test_cpmg_filter_peak_near_probe_frequency():
    # the intrinsic peak offset shrinks as ~1/n^2; at n = 32 it sits
    # within one step of a 1000-point sweep around n pi / t
    n, t = 32, 1e-4
    seq = cpmg(n, t)
    w = np.linspace(0.2, 3.0, 1000) * n * np.pi / t
    weight = filter_function(seq, w) / w**2
    peak = w[np.argmax(weight)]
    dw = w[1] - w[0]
    assert abs(peak - n * np.pi / t) <= dw


def test_zero_index_term_toggle_breaks_refocusing():
    seq = cpmg(3, 1.0)
    assert filter_function(seq, 0.0, include_zero_index_term=True) == pytest.approx(4.0)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=12),
    scale=st.floats(min_value=0.1, max_value=40.0),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_filter_function_nonnegative_for_random_sequences(n, scale, seed):
    rng = np.random.default_rng(seed)
    fractions = np.sort(rng.uniform(0.02, 0.98, n))
    fractions = np.unique(fractions)
    if fractions.size == 0:
        return
    seq = PulseSequence(1.0, fractions)
    w = rng.uniform(0.0, scale, 50)
    assert np.all(filter_function(seq, w) >= 0)


def test_sequence_json_round_trip():
    seq = udd(5, 2e-4, 1e-7)
    restored = PulseSequence.from_json(seq.to_json())
    assert restored.total_time == seq.total_time
    assert restored.pi_duration == seq.pi_duration
    assert np.allclose(restored.centers, seq.centers)


def test_sequence_json_rejects_garbage():
    with pytest.raises(ValidationError):
        PulseSequence.from_json("{not json")
    with pytest.raises(ValidationError):
        PulseSequence.from_json('{"n": 2, "total_time_s": 1.0, "centers_s": [0.5], "pi_duration_s": 0}')


def test_family_parse_and_build():
    fam = SequenceFamily.parse("cpmg:16", pi_duration=1e-7)
    assert fam.n_pulses == 16
    seq = fam.build(1e-4)
    assert np.allclose(seq.centers, cpmg(16, 1e-4, 1e-7).centers)
    assert SequenceFamily.parse("hahn").label == "hahn"
    with pytest.raises(ValidationError):
        SequenceFamily.parse("pdd:3")


def test_explicit_family_scales_fractions():
    fam = SequenceFamily("explicit", fractions=(0.2, 0.5, 0.9))
    seq = fam.build(2.0)
    assert np.allclose(seq.centers, [0.4, 1.0, 1.8])
