"""Coherence decay from a noise spectrum: chi(t) = integral of
S(omega) F(omega t) / (2 pi omega^2).

The integral is evaluated in the scaled variable x = omega * t, where
the filter function of a sequence family with fixed fractional pulse
positions depends on x alone.  The filter amplitude is accumulated as
A0(x) = sum_j c_j (e^(i f_j x) - 1), which is exact because the
coefficients sum to zero, and avoids the catastrophic cancellation a
direct sum suffers at small x where |A0| ~ x^2.  Finite pulse duration
enters through c = cos(x tau_pi / 2t):

    F(x) = B0 + 4 (c - 1) B1 + 4 (c - 1)^2 B2,
    B0 = |A0|^2,  B1 = Re(conj(A0) P),  B2 = |P|^2,

with P the bare alternating pulse sum, so the B arrays are computed
once per family and reused for every time point and pulse duration.

The x grid has three sections, each integrated by composite Simpson:
log-spaced at small x (resolving spectral knees), linear through the
oscillatory region, and log-spaced for the far tail where only the
non-oscillatory part of F is kept; the truncated oscillatory tail is
restored to second order by integration-by-parts boundary terms.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .grids import CHI_CAP, GRID_POINTS, TimeGrid
from .sequences import PulseSequence, SequenceFamily
from .spectra import NoiseSpectrum
from .validation import as_float_array, require, require_positive


@dataclass(frozen=True)
class QuadratureConfig:
    """Node layout for the scaled-frequency integration grid."""

    x_low: float = 1e-6
    x_switch: float = 10.0
    log_step: float = 0.025
    x_osc_cut: float = 2e4
    tail_step: float = 0.02
    x_tail_end: float = 1e7

    def refine(self, factor: float = 2.0) -> "QuadratureConfig":
        """Same spans with ``factor`` times the node density."""
        return replace(
            self,
            log_step=self.log_step / factor,
            tail_step=self.tail_step / factor,
        )


ACCURATE = QuadratureConfig()
FAST = QuadratureConfig(
    x_low=1e-5,
    x_switch=5.0,
    log_step=0.06,
    x_osc_cut=1500.0,
    tail_step=0.05,
    x_tail_end=1e6,
)


def _even_count(n):
    n = max(int(n), 2)
    return n if n % 2 == 0 else n + 1


def _simpson_coeffs(n_nodes):
    c = np.full(n_nodes, 2.0)
    c[1::2] = 4.0
    c[0] = c[-1] = 1.0
    return c


def _log_section(a, b, step):
    """Simpson nodes and weights for integral of f dx on a log-spaced grid.

    Integrates x f(x) in u = ln x, so the weight on f(x_i) carries x_i.
    """
    n = _even_count(math.ceil(math.log(b / a) / step))
    x = np.geomspace(a, b, n + 1)
    h = math.log(b / a) / n
    w = _simpson_coeffs(n + 1) * (h / 3.0) * x
    return x, w


def _lin_section(a, b, dx):
    n = _even_count(math.ceil((b - a) / dx))
    x = np.linspace(a, b, n + 1)
    h = (b - a) / n
    w = _simpson_coeffs(n + 1) * (h / 3.0)
    return x, w


class _FilterKernel:
    """Per-family precomputation of the scaled filter function."""

    def __init__(self, fractions, config: QuadratureConfig):
        fractions = np.asarray(fractions, dtype=float)
        n = fractions.size
        self.n = n
        self.config = config

        x_log, w_log = _log_section(config.x_low, config.x_switch, config.log_step)
        x_lin, w_lin = _lin_section(
            config.x_switch, config.x_osc_cut, config.x_switch * config.log_step
        )
        x_main = np.concatenate([x_log, x_lin])
        w_main = np.concatenate([w_log, w_lin])
        self.x_main = x_main
        x_tail, w_tail = _log_section(config.x_osc_cut, config.x_tail_end, config.tail_step)
        self.x_tail = x_tail

        signs = np.where(np.arange(1, n + 1) % 2 == 0, 1.0, -1.0)
        end_sign = (-1.0) ** (n + 1)

        # A0 = sum c_j (e^(i f_j x) - 1) over the end term (c = end_sign,
        # f = 1) and pulse terms (c = 2 s_k, f = f_k); the f = 0 unit
        # term contributes nothing in this form.
        re_a = end_sign * (-2.0) * np.sin(x_main / 2.0) ** 2
        im_a = end_sign * np.sin(x_main)
        phase = np.outer(x_main, fractions)
        sin_half_sq = np.sin(phase / 2.0) ** 2
        re_a = re_a + (-4.0) * (sin_half_sq @ signs)
        sin_full = np.sin(phase)
        im_a = im_a + 2.0 * (sin_full @ signs)
        cos_full = 1.0 - 2.0 * sin_half_sq
        re_p = cos_full @ signs
        im_p = sin_full @ signs

        inv_x2 = w_main / x_main**2
        self.b0w = (re_a**2 + im_a**2) * inv_x2
        self.b1w = (re_a * re_p + im_a * im_p) * inv_x2
        self.b2w = (re_p**2 + im_p**2) * inv_x2

        # Smooth (non-oscillatory) part of F beyond the cut: the |1|^2 +
        # |e^(ix)|^2 diagonal gives 2, the pulse diagonal gives 4 n c^2.
        self.tail_base = 2.0 * w_tail / x_tail**2
        self.tail_pulse = 4.0 * n * w_tail / x_tail**2

        self._tail_osc_sums(fractions, signs, end_sign, config.x_osc_cut)

    def _tail_osc_sums(self, fractions, signs, end_sign, x_c):
        """Integration-by-parts sums restoring the dropped oscillatory tail.

        For each cross-frequency g of the filter expansion,
        integral_{x_c}^inf W(x) cos(g x) dx
          = -W(x_c) sin(g x_c)/g + W'(x_c) cos(g x_c)/g^2 + O(W''/g^3).
        The sums are grouped by how many pulse factors the pair carries
        so the slow cos(x tau_pi/2t) envelope can be applied at x_c.
        """
        coeff = np.concatenate([[1.0, end_sign], 2.0 * signs])
        freqs = np.concatenate([[0.0, 1.0], fractions])
        i_idx, j_idx = np.triu_indices(coeff.size, k=1)
        d = 2.0 * coeff[i_idx] * coeff[j_idx]
        g = np.abs(freqs[i_idx] - freqs[j_idx])
        pulse_count = (i_idx >= 2).astype(int) + (j_idx >= 2).astype(int)
        keep = g > 1e-12
        d, g, pulse_count = d[keep], g[keep], pulse_count[keep]
        self.osc_a = np.zeros(3)
        self.osc_b = np.zeros(3)
        for m in range(3):
            sel = pulse_count == m
            self.osc_a[m] = float(np.sum(d[sel] * np.sin(g[sel] * x_c) / g[sel]))
            self.osc_b[m] = float(np.sum(d[sel] * np.cos(g[sel] * x_c) / g[sel] ** 2))

    def chi(self, s_eval, t, tau_pi=0.0):
        """chi(t) for spectrum callable ``s_eval`` (of omega in rad/s)."""
        x = self.x_main
        s_main = s_eval(x / t)
        if tau_pi == 0.0:
            main = float(s_main @ self.b0w)
        else:
            cm1 = -2.0 * np.sin(x * (tau_pi / (4.0 * t))) ** 2
            main = float(
                s_main @ (self.b0w + (4.0 * cm1) * self.b1w + (4.0 * cm1 * cm1) * self.b2w)
            )

        xt = self.x_tail
        s_tail = s_eval(xt / t)
        if tau_pi == 0.0:
            tail = float(s_tail @ (self.tail_base + self.tail_pulse))
        else:
            ct2 = np.cos(xt * (tau_pi / (2.0 * t))) ** 2
            tail = float(s_tail @ self.tail_base + (s_tail * ct2) @ self.tail_pulse)

        # Power-law continuation of the smooth tail beyond the grid.
        x_end = xt[-1]
        w_end = s_tail[-1] / x_end**2
        w_prev = s_tail[-2] / xt[-2] ** 2
        if w_end > 0 and w_prev > 0:
            q = math.log(w_end / w_prev) / math.log(x_end / xt[-2])
            q = min(q, -1.05)
            if tau_pi == 0.0:
                dc = 2.0 + 4.0 * self.n
            else:
                dc = 2.0 + 2.0 * self.n
            tail += dc * w_end * x_end / (-1.0 - q)

        # Restore the truncated oscillatory tail to second order.
        x_c = self.config.x_osc_cut
        w_c = s_eval(np.array([x_c / t, x_c * 1.001 / t]))
        w0 = w_c[0] / x_c**2
        w1 = w_c[1] / (x_c * 1.001) ** 2
        dw = (w1 - w0) / (0.001 * x_c)
        if tau_pi == 0.0:
            cc = 1.0
        else:
            cc = math.cos(x_c * tau_pi / (2.0 * t))
        c_pow = np.array([1.0, cc, cc * cc])
        osc = float(c_pow @ (-w0 * self.osc_a + dw * self.osc_b))

        return t / (2.0 * np.pi) * (main + tail + osc)


_KERNEL_CACHE: dict = {}
_KERNEL_CACHE_MAX = 24


def _get_kernel(fractions, config: QuadratureConfig) -> _FilterKernel:
    key = (tuple(float(f) for f in fractions), config)
    kernel = _KERNEL_CACHE.get(key)
    if kernel is None:
        kernel = _FilterKernel(np.asarray(fractions, dtype=float), config)
        if len(_KERNEL_CACHE) >= _KERNEL_CACHE_MAX:
            _KERNEL_CACHE.pop(next(iter(_KERNEL_CACHE)))
        _KERNEL_CACHE[key] = kernel
    return kernel


@dataclass(frozen=True)
class StretchedExpParams:
    """Coherence lifetime T2 (s) and stretching power p."""

    t2: float
    power: float

    def __post_init__(self):
        require_positive(self.t2, "t2")
        require_positive(self.power, "power")


@dataclass(frozen=True)
class CoherenceCurve:
    """C(t) on a time grid, with the capped -ln C alongside.

    chi values are capped so that coherences never fall below the
    storage floor; C = exp(-chi) holds exactly for the stored arrays.
    ``quadrature_drift`` carries the measured relative change under grid
    refinement when a convergence check was requested.
    """

    grid: TimeGrid
    coherence: np.ndarray
    chi: np.ndarray | None = None
    sequence_family: str = "model"
    quadrature_drift: float | None = None

    def __post_init__(self):
        c = as_float_array(self.coherence, "coherence", length=GRID_POINTS)
        require(np.all((c > 0) & (c <= 1.0)), "coherence must lie in (0, 1]")
        object.__setattr__(self, "coherence", c)
        if self.chi is not None:
            chi = as_float_array(self.chi, "chi", length=GRID_POINTS)
            if not np.allclose(np.exp(-chi), c, rtol=1e-12, atol=0):
                raise ValidationError("stored chi and coherence disagree")
            object.__setattr__(self, "chi", chi)

    def log_coherence(self):
        return -self.chi if self.chi is not None else np.log(self.coherence)


def _cap_chi(chi):
    return np.minimum(chi, CHI_CAP)


def decoherence_integral(
    spectrum: NoiseSpectrum,
    sequence: PulseSequence,
    config: QuadratureConfig = ACCURATE,
    check: bool = False,
):
    """chi for one explicit sequence; non-negative.

    With ``check=True`` the integral is recomputed on a grid of twice
    the density and ``(chi, relative_drift)`` is returned.
    """
    kernel = _get_kernel(sequence.fractions, config)
    chi = kernel.chi(spectrum.evaluate, sequence.total_time, sequence.pi_duration)
    chi = max(chi, 0.0)
    if not check:
        return chi
    fine = _get_kernel(sequence.fractions, config.refine(2.0))
    chi_fine = max(
        fine.chi(spectrum.evaluate, sequence.total_time, sequence.pi_duration), 0.0
    )
    scale = max(abs(chi_fine), 1e-300)
    return chi, abs(chi - chi_fine) / scale


def coherence_curve(
    spectrum: NoiseSpectrum,
    family: SequenceFamily,
    grid: TimeGrid,
    tau_pi: float | None = None,
    config: QuadratureConfig = FAST,
    check: bool = False,
) -> CoherenceCurve:
    """Simulate C(t) across a time grid, rebuilding the family sequence
    (scaled fractional pulse positions) at every grid time."""
    pi_duration = family.pi_duration if tau_pi is None else float(tau_pi)
    if pi_duration < 0:
        raise ValidationError("tau_pi must be >= 0")
    fractions = family.pulse_fractions()
    # Sequence validity across the grid: the tightest time is t_min.
    t_min = grid.times[0]
    try:
        PulseSequence(t_min, fractions * t_min, pi_duration)
    except ValidationError as exc:
        raise ValidationError(
            f"family {family.label!r} is invalid at grid time {t_min:g} s: {exc}"
        ) from exc

    kernel = _get_kernel(fractions, config)
    s_eval = spectrum.evaluate
    chi = np.array([kernel.chi(s_eval, t, pi_duration) for t in grid.times])
    chi = np.maximum(chi, 0.0)
    drift = None
    if check:
        fine = _get_kernel(fractions, config.refine(2.0))
        chi_fine = np.maximum(
            np.array([fine.chi(s_eval, t, pi_duration) for t in grid.times]), 0.0
        )
        scale = np.maximum(np.abs(chi_fine), 1e-300)
        drift = float(np.max(np.abs(chi - chi_fine) / scale))
    capped = _cap_chi(chi)
    return CoherenceCurve(
        grid=grid,
        coherence=np.exp(-capped),
        chi=capped,
        sequence_family=family.label,
        quadrature_drift=drift,
    )


def stretched_exponential(params: StretchedExpParams, grid: TimeGrid) -> CoherenceCurve:
    """Phenomenological curve C(t) = exp(-(t/T2)^p)."""
    chi = _cap_chi((grid.times / params.t2) ** params.power)
    return CoherenceCurve(grid=grid, coherence=np.exp(-chi), chi=chi)


def measured_t2(curve: CoherenceCurve):
    """Time of the 1/e crossing, or None when the grid never crosses it.

    Interpolates log chi against log t between the bracketing grid
    points; assumes chi is increasing near the crossing.
    """
    chi = curve.chi if curve.chi is not None else -np.log(curve.coherence)
    above = np.nonzero(chi >= 1.0)[0]
    if above.size == 0 or above[0] == 0:
        return None
    j = above[0]
    i = j - 1
    if chi[i] <= 0:
        return None
    log_t = np.log(curve.grid.times)
    x0, x1 = math.log(chi[i]), math.log(chi[j])
    frac = (0.0 - x0) / (x1 - x0)
    return float(np.exp(log_t[i] + frac * (log_t[j] - log_t[i])))
