"""Pi-pulse sequences and their filter functions.

A sequence of n pi-pulses applied at times t_k within a total duration
t has spectral sensitivity

    F(omega) = |1 + (-1)^(n+1) e^(i omega t)
                + 2 cos(omega tau_pi / 2) sum_k (-1)^k e^(i omega t_k)|^2

with the sum running over k = 1..n.  F(0) = 0 for every sequence under
this convention, as refocusing requires.  (Some texts typeset the sum
from k = 0; that extra constant term breaks F(0) = 0 and is excluded by
default, with a toggle for comparison.)
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grids import TimeGrid
from .validation import as_float_array, require, require_nonnegative, require_positive


@dataclass(frozen=True)
class PulseSequence:
    """n pi-pulse centers within a total duration, all in seconds."""

    total_time: float
    centers: np.ndarray
    pi_duration: float = 0.0

    def __post_init__(self):
        require_positive(self.total_time, "total_time")
        require_nonnegative(self.pi_duration, "pi_duration")
        centers = as_float_array(self.centers, "centers")
        require(centers.ndim == 1 and centers.size >= 1, "centers must be a non-empty 1-d array")
        object.__setattr__(self, "centers", centers)
        half = self.pi_duration / 2.0
        if not centers[0] - half > 0:
            raise ValidationError("first pulse overlaps the start of the sequence")
        if not centers[-1] + half < self.total_time:
            raise ValidationError("last pulse overlaps the end of the sequence")
        gaps = np.diff(centers)
        if centers.size > 1 and not np.all(gaps >= self.pi_duration):
            raise ValidationError("pulses overlap: centers closer than pi_duration")
        if centers.size > 1 and not np.all(gaps > 0):
            raise ValidationError("pulse centers must be strictly increasing")

    @property
    def n(self) -> int:
        return int(self.centers.size)

    @property
    def fractions(self) -> np.ndarray:
        return self.centers / self.total_time

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "total_time_s": self.total_time,
                "centers_s": [float(c) for c in self.centers],
                "pi_duration_s": self.pi_duration,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        try:
            obj = json.loads(text)
            seq = cls(
                total_time=float(obj["total_time_s"]),
                centers=np.asarray(obj["centers_s"], dtype=float),
                pi_duration=float(obj["pi_duration_s"]),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed sequence JSON: {exc}") from exc
        if seq.n != int(obj["n"]):
            raise ValidationError("sequence JSON: n does not match centers length")
        return seq


def hahn(total_time: float, pi_duration: float = 0.0) -> PulseSequence:
    """Single refocusing pulse at t/2 (two-pulse echo)."""
    require_positive(total_time, "total_time")
    if not total_time > 2 * pi_duration:
        raise ValidationError("total_time too short for the pulse duration")
    return PulseSequence(total_time, np.array([total_time / 2.0]), pi_duration)


def cpmg(n: int, total_time: float, pi_duration: float = 0.0) -> PulseSequence:
    """n evenly spaced pulses, first at t/(2n): t_k = (2k-1) t / (2n)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    require_positive(total_time, "total_time")
    k = np.arange(1, n + 1, dtype=float)
    centers = (2.0 * k - 1.0) * total_time / (2.0 * n)
    return PulseSequence(total_time, centers, pi_duration)


def udd(n: int, total_time: float, pi_duration: float = 0.0) -> PulseSequence:
    """Uhrig spacing t_k = t sin^2(k pi / (2n + 2))."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    require_positive(total_time, "total_time")
    k = np.arange(1, n + 1, dtype=float)
    centers = total_time * np.sin(k * np.pi / (2.0 * n + 2.0)) ** 2
    return PulseSequence(total_time, centers, pi_duration)


def filter_function(seq: PulseSequence, omega, include_zero_index_term: bool = False):
    """Evaluate F(omega) for a sequence at angular frequencies >= 0.

    ``include_zero_index_term`` adds the k = 0 constant term found in
    some typeset versions of the formula; it breaks F(0) = 0 and exists
    only for comparison.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValidationError("omega must be >= 0")
    scalar = omega.ndim == 0
    w = np.atleast_1d(omega)
    signs = np.where(np.arange(1, seq.n + 1) % 2 == 0, 1.0, -1.0)
    phases = np.exp(1j * np.outer(w, seq.centers))
    pulse_sum = phases @ signs
    amp = (
        1.0
        + (-1.0) ** (seq.n + 1) * np.exp(1j * w * seq.total_time)
        + 2.0 * np.cos(w * seq.pi_duration / 2.0) * pulse_sum
    )
    if include_zero_index_term:
        amp = amp + 2.0 * np.cos(w * seq.pi_duration / 2.0)
    out = np.abs(amp) ** 2
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class SequenceFamily:
    """A rule for building a sequence of a given shape at any total time.

    ``kind`` is ``"hahn"``, ``"cpmg"`` or ``"explicit"``; explicit
    families scale fixed fractional pulse positions with the total time.
    """

    kind: str
    n_pulses: int = 1
    fractions: tuple = ()
    pi_duration: float = 0.0

    def __post_init__(self):
        require(self.kind in ("hahn", "cpmg", "explicit"), f"unknown family kind {self.kind!r}")
        require_nonnegative(self.pi_duration, "pi_duration")
        if self.kind == "hahn":
            object.__setattr__(self, "n_pulses", 1)
        if self.kind == "explicit":
            fr = tuple(float(f) for f in self.fractions)
            require(len(fr) >= 1, "explicit family needs pulse fractions")
            require(all(0 < f < 1 for f in fr), "fractions must lie in (0, 1)")
            require(
                all(b > a for a, b in zip(fr, fr[1:])),
                "fractions must be strictly increasing",
            )
            object.__setattr__(self, "fractions", fr)
            object.__setattr__(self, "n_pulses", len(fr))
        else:
            require(self.n_pulses >= 1, "n_pulses must be >= 1")

    @property
    def label(self) -> str:
        if self.kind == "hahn":
            return "hahn"
        if self.kind == "cpmg":
            return f"cpmg:{self.n_pulses}"
        return "explicit"

    def pulse_fractions(self) -> np.ndarray:
        if self.kind == "hahn":
            return np.array([0.5])
        if self.kind == "cpmg":
            k = np.arange(1, self.n_pulses + 1, dtype=float)
            return (2.0 * k - 1.0) / (2.0 * self.n_pulses)
        return np.asarray(self.fractions, dtype=float)

    def build(self, total_time: float) -> PulseSequence:
        if self.kind == "hahn":
            return hahn(total_time, self.pi_duration)
        if self.kind == "cpmg":
            return cpmg(self.n_pulses, total_time, self.pi_duration)
        return PulseSequence(
            total_time, self.pulse_fractions() * total_time, self.pi_duration
        )

    @classmethod
    def parse(cls, label: str, pi_duration: float = 0.0) -> "SequenceFamily":
        """Parse ``"hahn"`` or ``"cpmg:N"`` labels (the CLI format)."""
        label = label.strip().lower()
        if label == "hahn":
            return cls("hahn", pi_duration=pi_duration)
        if label.startswith("cpmg:"):
            try:
                n = int(label.split(":", 1)[1])
            except ValueError as exc:
                raise ValidationError(f"bad sequence label {label!r}") from exc
            return cls("cpmg", n_pulses=n, pi_duration=pi_duration)
        raise ValidationError(f"unknown sequence family {label!r}")
