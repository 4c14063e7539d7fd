"""Parametric noise-spectrum models.

All spectra are one-sided power spectral densities S(omega) of the
dephasing field, in units of 1/s, sampled on a :class:`FrequencyGrid`.
The supported families are

* a Lorentzian bath, ``(delta^2 tau_c / pi) / (1 + (omega tau_c)^2)``,
* power-law ("one over f") noise ``A / f^alpha`` with f = omega/2pi,
* a Lorentzian-shaped spectral feature centred at a nonzero frequency,
* power laws arising from inverting a stretched-exponential decay, and
* sums of the above (double Lorentzian, power law plus feature).
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitFailure, ValidationError
from .grids import GRID_POINTS, FrequencyGrid
from .validation import as_float_array, require, require_positive

# Smallest spectrum value used when interpolating sampled spectra in
# log space; clamped-to-zero points are treated as this floor.
SPECTRUM_LOG_FLOOR = 1e-280


class ModelKind(enum.Enum):
    STRETCHED_EXP_DERIVED = "stretched_exp_derived"
    ONE_OVER_F = "one_over_f"
    LORENTZIAN = "lorentzian"
    DOUBLE_LORENTZIAN = "double_lorentzian"
    ONE_OVER_F_PLUS_LORENTZIAN = "one_over_f_plus_lorentzian"


@dataclass(frozen=True)
class LorentzianParams:
    """Coupling strength delta (rad/s) and correlation time tau_c (s)."""

    delta: float
    tau_c: float

    def __post_init__(self):
        require_positive(self.delta, "delta")
        require_positive(self.tau_c, "tau_c")


@dataclass(frozen=True)
class OneOverFParams:
    """Amplitude A (spectrum units times (Hz)^alpha) and exponent alpha."""

    amplitude: float
    exponent: float

    def __post_init__(self):
        require_positive(self.amplitude, "amplitude")
        if not math.isfinite(self.exponent):
            raise ValidationError("exponent must be finite")


@dataclass(frozen=True)
class LorentzianFeatureParams:
    """Lorentzian-shaped bump at a nonzero centre frequency.

    ``height / (1 + ((omega - center)/width)^2)`` with all quantities in
    rad/s except the dimensionless-height spectrum value.  Used for
    spectra carrying a localized feature on top of a smooth background;
    unlike :class:`LorentzianParams` this peaks away from omega = 0.
    """

    height: float
    center: float
    width: float

    def __post_init__(self):
        require_positive(self.height, "height")
        require_positive(self.center, "center")
        require_positive(self.width, "width")


@dataclass(frozen=True)
class StretchedDecayParams:
    """Power-law spectrum obtained by delta-inverting exp(-(t/T2)^p).

    S(omega) = pi * (n pi)^(p-1) * T2^(-p) * omega^(1-p) for an n-pulse
    evenly spaced probe sequence.
    """

    t2: float
    power: float
    n_pulses: int = 1

    def __post_init__(self):
        require_positive(self.t2, "t2")
        require_positive(self.power, "power")
        require(self.n_pulses >= 1, "n_pulses must be >= 1")


def eval_lorentzian(params: LorentzianParams, omega):
    """Lorentzian PSD (delta^2 tau_c / pi) / (1 + (omega tau_c)^2)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValidationError("omega must be >= 0")
    return (params.delta**2 * params.tau_c / np.pi) / (
        1.0 + (omega * params.tau_c) ** 2
    )


def eval_one_over_f(params: OneOverFParams, omega):
    """Power-law PSD A / f^alpha with cyclic frequency f = omega / 2 pi."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValidationError("omega must be > 0 for a power-law spectrum")
    f = omega / (2.0 * np.pi)
    return params.amplitude * f ** (-params.exponent)


def eval_lorentzian_feature(params: LorentzianFeatureParams, omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValidationError("omega must be >= 0")
    return params.height / (1.0 + ((omega - params.center) / params.width) ** 2)


def eval_stretched_derived(params: StretchedDecayParams, omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValidationError("omega must be > 0 for a power-law spectrum")
    n_pi = params.n_pulses * np.pi
    return (
        np.pi
        * n_pi ** (params.power - 1.0)
        * params.t2 ** (-params.power)
        * omega ** (1.0 - params.power)
    )


_COMPONENT_EVAL = {
    LorentzianParams: eval_lorentzian,
    OneOverFParams: eval_one_over_f,
    LorentzianFeatureParams: eval_lorentzian_feature,
    StretchedDecayParams: eval_stretched_derived,
}


@dataclass(frozen=True)
class CompositeModel:
    """A tagged sum of spectrum components."""

    kind: ModelKind
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        for comp in self.components:
            if type(comp) not in _COMPONENT_EVAL:
                raise ValidationError(f"unsupported component type {type(comp)!r}")
        counts = {}
        for comp in self.components:
            counts[type(comp)] = counts.get(type(comp), 0) + 1
        if self.kind is ModelKind.DOUBLE_LORENTZIAN:
            require(
                counts.get(LorentzianParams, 0) == 2 and len(self.components) == 2,
                "double Lorentzian needs exactly two Lorentzian components",
            )
        elif self.kind is ModelKind.LORENTZIAN:
            require(
                counts.get(LorentzianParams, 0) == 1 and len(self.components) == 1,
                "Lorentzian model needs exactly one Lorentzian component",
            )
        elif self.kind is ModelKind.ONE_OVER_F:
            require(
                counts.get(OneOverFParams, 0) == 1 and len(self.components) == 1,
                "power-law model needs exactly one power-law component",
            )
        elif self.kind is ModelKind.ONE_OVER_F_PLUS_LORENTZIAN:
            require(
                counts.get(OneOverFParams, 0) == 1
                and counts.get(LorentzianFeatureParams, 0) == 1
                and len(self.components) == 2,
                "power-law-plus-feature model needs one power law and one feature",
            )
        elif self.kind is ModelKind.STRETCHED_EXP_DERIVED:
            require(
                counts.get(StretchedDecayParams, 0) == 1 and len(self.components) == 1,
                "stretched-decay model needs exactly one component",
            )

    def __call__(self, omega):
        return evaluate_model(self, omega)


def evaluate_model(model: CompositeModel, omega):
    """Pointwise sum of the model components at ``omega`` (rad/s)."""
    omega = np.asarray(omega, dtype=float)
    total = np.zeros_like(omega)
    for comp in model.components:
        total = total + _COMPONENT_EVAL[type(comp)](comp, omega)
    return total


@dataclass(frozen=True)
class NoiseSpectrum:
    """Sampled S(omega) on a frequency grid, optionally with a model tag.

    ``clamp_count`` records how many reconstructed values were clamped
    up to zero (relevant for inversion outputs fed noisy data).
    """

    grid: FrequencyGrid
    values: np.ndarray
    model: CompositeModel | None = None
    clamp_count: int = 0

    def __post_init__(self):
        values = as_float_array(self.values, "values", length=GRID_POINTS)
        require(np.all(values >= 0), "spectrum values must be non-negative")
        object.__setattr__(self, "values", values)

    def evaluate(self, omega):
        """Spectrum values at arbitrary omega > 0.

        Uses the analytic model when tagged; otherwise log-log
        interpolation inside the grid and power-law extrapolation fitted
        to the outer decade at each end.
        """
        if self.model is not None:
            return evaluate_model(self.model, omega)
        return _interp_sampled(self.grid.omega, self.values, omega)


def _power_law_slope(log_w, log_s, lo_end):
    """Least-squares slope of log S vs log omega over one end decade."""
    if lo_end:
        mask = log_w <= log_w[0] + np.log(10.0)
    else:
        mask = log_w >= log_w[-1] - np.log(10.0)
    x = log_w[mask]
    y = log_s[mask]
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return 0.0
    return float(np.dot(x, y - y.mean()) / denom)


def _interp_sampled(grid_omega, values, omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValidationError("omega must be > 0 to evaluate a sampled spectrum")
    floored = np.maximum(values, SPECTRUM_LOG_FLOOR)
    log_w = np.log(grid_omega)
    log_s = np.log(floored)
    out = np.interp(np.log(omega), log_w, log_s)
    # Power-law tails from the outer decades; slopes capped so the
    # decoherence integral stays convergent.
    slope_lo = np.clip(_power_law_slope(log_w, log_s, lo_end=True), -2.5, 4.0)
    slope_hi = np.clip(_power_law_slope(log_w, log_s, lo_end=False), -8.0, 0.9)
    lo = np.log(omega) < log_w[0]
    hi = np.log(omega) > log_w[-1]
    if np.any(lo):
        out = np.where(lo, log_s[0] + slope_lo * (np.log(omega) - log_w[0]), out)
    if np.any(hi):
        out = np.where(hi, log_s[-1] + slope_hi * (np.log(omega) - log_w[-1]), out)
    result = np.exp(out)
    return np.where(result <= 2 * SPECTRUM_LOG_FLOOR, 0.0, result)


def sample_spectrum(model: CompositeModel, grid: FrequencyGrid) -> NoiseSpectrum:
    """Sample a composite model onto a frequency grid."""
    return NoiseSpectrum(grid=grid, values=evaluate_model(model, grid.omega), model=model)


def double_lorentzian_model(low: LorentzianParams, high: LorentzianParams):
    return CompositeModel(ModelKind.DOUBLE_LORENTZIAN, (low, high))


def _double_lorentzian_log_resid(theta, log_w, log_s):
    d1, t1, d2, t2 = np.exp(theta)
    w = np.exp(log_w)
    s = (d1**2 * t1 / np.pi) / (1.0 + (w * t1) ** 2) + (d2**2 * t2 / np.pi) / (
        1.0 + (w * t2) ** 2
    )
    return np.log(np.maximum(s, SPECTRUM_LOG_FLOOR)) - log_s


def _single_lorentzian_log_resid(theta, log_w, log_s):
    d1, t1 = np.exp(theta)
    w = np.exp(log_w)
    s = (d1**2 * t1 / np.pi) / (1.0 + (w * t1) ** 2)
    return np.log(np.maximum(s, SPECTRUM_LOG_FLOOR)) - log_s


def fit_double_lorentzian(spectrum: NoiseSpectrum, n_starts: int = 5, residual_tol: float = 0.35):
    """Least-squares fit of a two-Lorentzian sum in log space.

    Returns ``(low, high, residual)`` where ``low`` is the component
    with the larger correlation time and ``residual`` the RMS log-space
    misfit.  Multi-start local optimization; raises :class:`FitFailure`
    carrying the best residual when no start converges below
    ``residual_tol``.
    """
    require(np.all(spectrum.values > 0), "spectrum values must be positive to fit")
    w = spectrum.grid.omega
    s = spectrum.values
    log_w = np.log(w)
    log_s = np.log(s)

    # Heuristic starts: knee positions spread over the grid; amplitude
    # from the local plateau value S(0) ~ delta^2 tau_c / pi.
    def start_for(idx_lo, idx_hi):
        t1 = 1.0 / w[idx_lo]
        t2 = 1.0 / w[idx_hi]
        d1 = math.sqrt(max(s[idx_lo] * np.pi / t1, 1e-30))
        d2 = math.sqrt(max(s[idx_hi] * np.pi / t2, 1e-30))
        return np.log([d1, t1, d2, t2])

    anchor_pairs = [
        (5, 90),
        (20, 120),
        (0, 75),
        (40, 145),
        (10, 60),
    ][:n_starts]

    best = None
    best_cost = np.inf
    for idx_lo, idx_hi in anchor_pairs:
        theta0 = start_for(idx_lo, idx_hi)
        try:
            res = least_squares(
                _double_lorentzian_log_resid,
                theta0,
                args=(log_w, log_s),
                method="lm",
                max_nfev=4000,
            )
        except Exception:
            continue
        if res.cost < best_cost:
            best_cost = res.cost
            best = res
    if best is None:
        raise FitFailure("double-Lorentzian fit failed on every start")
    d1, t1, d2, t2 = np.exp(best.x)
    residual = float(np.sqrt(np.mean(best.fun**2)))

    # Two components with near-equal correlation times are unidentifiable
    # (only delta_1^2 + delta_2^2 matters).  When a single component fits
    # as well, return the canonical degenerate split: one component
    # carries everything, the second collapses.
    idx_hi = int(np.argmax(s))
    theta_single = np.log(
        [math.sqrt(max(s[idx_hi] * np.pi * w[idx_hi], 1e-30)), 1.0 / w[idx_hi]]
    )
    try:
        single = least_squares(
            _single_lorentzian_log_resid,
            theta_single,
            args=(log_w, log_s),
            method="lm",
            max_nfev=2000,
        )
        single_residual = float(np.sqrt(np.mean(single.fun**2)))
    except Exception:
        single_residual = np.inf
    if single_residual <= max(residual * 1.05, 1e-8):
        d, t = np.exp(single.x)
        comps = (LorentzianParams(d, t), LorentzianParams(d * 1e-6, t / 2.0))
        return comps[0], comps[1], single_residual

    comps = sorted(
        [LorentzianParams(d1, t1), LorentzianParams(d2, t2)],
        key=lambda p: -p.tau_c,
    )
    if residual > residual_tol:
        raise FitFailure(
            "double-Lorentzian fit did not converge",
            best_params=tuple(comps),
            residual=residual,
        )
    return comps[0], comps[1], residual
