"""Time and angular-frequency grids.

Both measurement curves and reconstructed spectra live on 151-point
log-spaced grids.  A frequency grid is always derived from a time grid
through the probe-frequency relation of an n-pulse evenly spaced
sequence, omega = n*pi/t, which reverses the ordering so that
frequencies come out ascending.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .validation import as_float_array, require, require_positive

GRID_POINTS = 151

# Stored coherences are floored here: it matches the clamp floor of the
# denoising network head and the clip applied to synthetic measurement
# noise, and it keeps log C finite for fast decays.
COHERENCE_FLOOR = 1e-9
CHI_CAP = -float(np.log(COHERENCE_FLOOR))


def _check_grid(values, name):
    arr = as_float_array(values, name, length=GRID_POINTS)
    require(np.all(arr > 0), f"{name} entries must be positive")
    require(np.all(np.diff(arr) > 0), f"{name} must be strictly increasing")
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """151 strictly increasing positive times (seconds)."""

    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _check_grid(self.times, "times"))

    @classmethod
    def log_spaced(cls, t_min, t_max):
        require_positive(t_min, "t_min")
        require(t_max > t_min, "t_max must exceed t_min")
        return cls(np.geomspace(t_min, t_max, GRID_POINTS))

    def __len__(self):
        return GRID_POINTS

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)


@dataclass(frozen=True)
class FrequencyGrid:
    """151 strictly increasing positive angular frequencies (rad/s)."""

    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", _check_grid(self.omega, "omega"))

    @classmethod
    def from_time_grid(cls, grid: TimeGrid, n_pulses: int = 1):
        """Probe frequencies n*pi/t of an n-pulse evenly spaced sequence,
        reversed so the grid ascends."""
        if n_pulses < 1:
            raise ValidationError("n_pulses must be >= 1")
        return cls(n_pulses * np.pi / grid.times[::-1])

    def __len__(self):
        return GRID_POINTS

    def __eq__(self, other):
        return isinstance(other, FrequencyGrid) and np.array_equal(
            self.omega, other.omega
        )
