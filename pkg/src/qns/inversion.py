"""Classical spectrum reconstruction from coherence decays.

Three routes of increasing sophistication:

* the delta-function shortcut, treating the filter of an n-pulse evenly
  spaced sequence as a spike at omega_0 = n pi / t, so that
  S(omega_0) = -pi ln C(t) / t;
* the phenomenological round trip that turns a stretched-exponential
  decay into an exactly consistent (curve, spectrum) training pair;
* the fixed-delay multi-pulse protocol of Alvarez and Suter, solving
  R(tau) = sum_k A_k^2 S(k pi / tau) over odd harmonics.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grids import CHI_CAP, FrequencyGrid, TimeGrid
from .sequences import SequenceFamily, cpmg
from .simulate import (
    FAST,
    CoherenceCurve,
    QuadratureConfig,
    StretchedExpParams,
    _get_kernel,
    coherence_curve,
    stretched_exponential,
)
from .spectra import (
    CompositeModel,
    ModelKind,
    NoiseSpectrum,
    SPECTRUM_LOG_FLOOR,
    StretchedDecayParams,
)
from .validation import require


def delta_inversion(curve: CoherenceCurve, n_pulses: int = 1) -> NoiseSpectrum:
    """Map a decay curve to a spectrum through the spike approximation.

    S(n pi / t_i) = -pi ln C(t_i) / t_i.  The output frequency grid is
    the reversed image of the curve's time grid.  Points where C >= 1
    would give S <= 0 and are clamped to zero, counted in
    ``clamp_count``.
    """
    require(n_pulses >= 1, "n_pulses must be >= 1")
    require(np.all(curve.coherence > 0), "coherence must be positive")
    t = curve.grid.times
    chi = -curve.log_coherence()
    s = np.pi * chi / t
    clamped = int(np.sum(s <= 0))
    s = np.maximum(s, 0.0)
    grid = FrequencyGrid.from_time_grid(curve.grid, n_pulses)
    return NoiseSpectrum(grid=grid, values=s[::-1], clamp_count=clamped)


def stretched_decay_spectrum(
    params: StretchedExpParams, time_grid: TimeGrid, n_pulses: int = 1
) -> NoiseSpectrum:
    """Spectrum from delta-inverting an exact stretched-exponential decay.

    The inversion of exp(-(t/T2)^p) has the closed power-law form
    S(omega) = pi (n pi)^(p-1) T2^(-p) omega^(1-p), carried as an
    analytic model tag so off-grid evaluation stays exact.
    """
    model = CompositeModel(
        ModelKind.STRETCHED_EXP_DERIVED,
        (StretchedDecayParams(params.t2, params.power, n_pulses),),
    )
    grid = FrequencyGrid.from_time_grid(time_grid, n_pulses)
    return NoiseSpectrum(grid=grid, values=model(grid.omega), model=model)


def phenomenological_roundtrip(
    params: StretchedExpParams,
    grid: TimeGrid,
    family: SequenceFamily,
    config: QuadratureConfig = FAST,
):
    """Training pair from a stretched-exponential seed.

    Builds the phenomenological curve, delta-inverts it to a spectrum,
    then regenerates the decay from that spectrum under ``family`` --
    the regenerated (curve, spectrum) pair is exactly consistent with
    the decoherence integral by construction.  Returns
    ``(spectrum, regenerated_curve)``.
    """
    spectrum = stretched_decay_spectrum(params, grid, family.n_pulses)
    curve = coherence_curve(spectrum, family, grid, config=config)
    return spectrum, curve


@dataclass(frozen=True)
class SensitivitySet:
    """Odd-harmonic filter weights of a long evenly spaced pulse train.

    ``coefficients`` maps odd harmonic index k to A_k^2 >= 0 such that
    the steady decay rate is R = sum_k A_k^2 S(k omega_0) with
    omega_0 = pi / tau.
    """

    omega0: float
    coefficients: dict
    k_max: int

    def __post_init__(self):
        require(self.k_max >= 1 and self.k_max % 2 == 1, "k_max must be odd and >= 1")
        for k, a in self.coefficients.items():
            require(k % 2 == 1, "only odd harmonics carry weight for ideal pulses")
            require(a >= 0, "sensitivities must be non-negative")


def harmonic_sensitivities(
    tau: float,
    n_ref: int = 128,
    tau_pi: float = 0.0,
    k_max: int = 7,
    nodes_per_window: int = 8192,
) -> SensitivitySet:
    """Window-integrated sensitivities of an n_ref-pulse evenly spaced train.

    A_k^2 = (1/2 pi) * integral of F(omega) / (omega^2 T) over the full
    harmonic slot [(k-1) omega_0, (k+1) omega_0]; the slots tile the
    axis, so the weights satisfy the white-noise sum rule
    sum_k A_k^2 -> 1/2 as k_max grows.  In the scaled variable
    x = omega T the slot around harmonic k is [(k-1) pi n, (k+1) pi n],
    independent of tau for ideal pulses.
    """
    require(k_max >= 1 and k_max % 2 == 1, "k_max must be odd and >= 1")
    if n_ref < 2 * (k_max + 1):
        raise ValidationError(
            f"n_ref={n_ref} cannot resolve harmonics up to k={k_max}; "
            f"use n_ref >= {2 * (k_max + 1)}"
        )
    require(tau > 0, "tau must be positive")
    require(tau_pi >= 0, "tau_pi must be >= 0")
    total_time = n_ref * tau
    seq = cpmg(n_ref, total_time, tau_pi)
    fractions = seq.fractions
    signs = np.where(np.arange(1, n_ref + 1) % 2 == 0, 1.0, -1.0)
    end_sign = (-1.0) ** (n_ref + 1)
    rho = tau_pi / total_time

    coeffs = {}
    for k in range(1, k_max + 1, 2):
        x = np.linspace((k - 1) * np.pi * n_ref, (k + 1) * np.pi * n_ref, nodes_per_window + 1)
        if x[0] == 0.0:
            x = x[1:]
        re_a = end_sign * (-2.0) * np.sin(x / 2.0) ** 2
        im_a = end_sign * np.sin(x)
        phase = np.outer(x, fractions)
        re_a = re_a + (-4.0) * (np.sin(phase / 2.0) ** 2 @ signs)
        im_a = im_a + 2.0 * (np.sin(phase) @ signs)
        if tau_pi > 0.0:
            cm1 = -2.0 * np.sin(x * rho / 4.0) ** 2
            re_p = np.cos(phase) @ signs
            im_p = np.sin(phase) @ signs
            f_val = (re_a**2 + im_a**2) + 4.0 * cm1 * (re_a * re_p + im_a * im_p) + (
                4.0 * cm1**2
            ) * (re_p**2 + im_p**2)
        else:
            f_val = re_a**2 + im_a**2
        integrand = f_val / x**2
        a_sq = float(np.trapezoid(integrand, x) / (2.0 * np.pi))
        coeffs[k] = max(a_sq, 0.0)
    return SensitivitySet(omega0=np.pi / tau, coefficients=coeffs, k_max=k_max)


def default_tau_grid(grid: FrequencyGrid, count: int = 40):
    """Log-spaced pulse delays whose probe frequencies span the grid."""
    return np.geomspace(np.pi / grid.omega[-1], np.pi / grid.omega[0], count)


def fit_decay_rate(total_times, chis):
    """Least-squares rate through the origin: chi = R * T."""
    total_times = np.asarray(total_times, dtype=float)
    chis = np.asarray(chis, dtype=float)
    rate = float(np.dot(chis, total_times) / np.dot(total_times, total_times))
    resid = chis - rate * total_times
    scale = float(np.sqrt(np.mean(chis**2))) or 1.0
    return max(rate, 0.0), float(np.sqrt(np.mean(resid**2)) / scale)


def alvarez_suter(
    spectrum_under_test: NoiseSpectrum,
    tau_grid=None,
    n_list=(4, 8, 16, 32, 64),
    tau_pi: float = 0.0,
    k_max: int = 7,
    requested_grid: FrequencyGrid | None = None,
    config: QuadratureConfig = FAST,
    n_ref: int = 128,
    sweeps: int = 3,
) -> NoiseSpectrum:
    """Reconstruct a spectrum through fixed-delay, variable-pulse decays.

    For every delay tau the decay rate R(tau) is fitted from simulated
    evenly spaced sequences with the pulse counts in ``n_list`` (total
    time n tau), then R(tau_i) = sum_{k odd} A_k^2 S(k pi / tau_i) is
    solved from the highest probe frequency downward, substituting
    already-solved values at the harmonics and extrapolating above the
    probed band.  A few fixed-point sweeps refine the band edge.
    Negative solutions are clamped to zero and counted.
    """
    if requested_grid is None:
        requested_grid = spectrum_under_test.grid
    if tau_grid is None:
        tau_grid = default_tau_grid(requested_grid)
    tau_grid = np.sort(np.asarray(tau_grid, dtype=float))
    require(tau_grid.size >= 1 and np.all(tau_grid > 0), "tau_grid must be positive")
    require(len(n_list) >= 1 and all(n >= 1 for n in n_list), "n_list must be non-empty")

    sens = harmonic_sensitivities(float(tau_grid[0]), n_ref=n_ref, tau_pi=tau_pi, k_max=k_max)
    ks = sorted(sens.coefficients)
    a1 = sens.coefficients[ks[0]]

    # Measured rates, one per delay.
    rates = np.empty(tau_grid.size)
    for i, tau in enumerate(tau_grid):
        chis = []
        times = []
        for n in n_list:
            seq_total = n * tau
            kernel = _get_kernel(cpmg(n, seq_total, tau_pi).fractions, config)
            chis.append(kernel.chi(spectrum_under_test.evaluate, seq_total, tau_pi))
            times.append(seq_total)
        rates[i], _ = fit_decay_rate(times, chis)

    omega0 = np.pi / tau_grid[::-1]  # ascending probe frequencies
    rates = rates[::-1]
    solved = np.zeros_like(omega0)
    clamped = 0
    log_w = np.log(omega0)

    def harmonic_value(w, current):
        """S estimate at harmonic frequency w from the current solution."""
        cur = np.maximum(current, SPECTRUM_LOG_FLOOR)
        if w <= omega0[-1]:
            return math.exp(np.interp(math.log(w), log_w, np.log(cur)))
        # Above the band: power law from the top decade.
        mask = log_w >= log_w[-1] - math.log(10.0)
        xs = log_w[mask] - log_w[mask].mean()
        ys = np.log(cur[mask])
        denom = float(np.dot(xs, xs))
        slope = float(np.dot(xs, ys - ys.mean()) / denom) if denom else 0.0
        slope = min(slope, 0.0)
        return math.exp(np.log(cur[-1]) + slope * (math.log(w) - log_w[-1]))

    for sweep in range(sweeps):
        clamped = 0
        for i in range(omega0.size - 1, -1, -1):
            acc = rates[i]
            for k in ks[1:]:
                acc -= sens.coefficients[k] * harmonic_value(k * omega0[i], solved)
            val = acc / a1
            if val < 0:
                clamped += 1
                val = 0.0
            solved[i] = val

    w_req = requested_grid.omega
    if w_req[0] < omega0[0] * (1 - 1e-9) or w_req[-1] > omega0[-1] * (1 + 1e-9):
        raise ValidationError(
            "tau_grid does not cover the requested frequency band: probes span "
            f"[{omega0[0]:.4g}, {omega0[-1]:.4g}] rad/s, requested "
            f"[{w_req[0]:.4g}, {w_req[-1]:.4g}] rad/s"
        )
    out = np.exp(
        np.interp(np.log(w_req), log_w, np.log(np.maximum(solved, SPECTRUM_LOG_FLOOR)))
    )
    out = np.where(out <= 2 * SPECTRUM_LOG_FLOOR, 0.0, out)
    return NoiseSpectrum(grid=requested_grid, values=out, clamp_count=clamped)
