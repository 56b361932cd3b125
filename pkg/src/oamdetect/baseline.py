"""Classical circular phase-gradient detector for a single OAM mode.

Reconstruction of the textbook estimator: walk once around the receive ring,
wrap every adjacent phase step into (-pi, pi], and read the mode off the total
winding. A valid estimate additionally needs near-uniform steps, which only
holds when the arrays are coaxial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .oam_signal import ReceivedVector, phase_features, wrap_phase

DEFAULT_RESIDUAL_LIMIT = 0.05


@dataclass(frozen=True)
class GradientEstimate:
    mode_estimate: int
    raw_winding: float
    residual: float

    def is_valid(self, residual_limit: float = DEFAULT_RESIDUAL_LIMIT) -> bool:
        return self.residual <= residual_limit and abs(self.raw_winding - self.mode_estimate) <= 0.5


def gradient_detect(x, n_rx=None) -> GradientEstimate:
    s = np.asarray(x.samples if isinstance(x, ReceivedVector) else x)
    if n_rx is not None and len(s) != n_rx:
        raise DimensionError(f"expected {n_rx} samples, got {len(s)}")
    ph = phase_features(s)
    steps = wrap_phase(np.roll(ph, -1) - ph)
    winding = float(np.sum(steps)) / (2.0 * math.pi)
    est = int(round(winding))
    expected = 2.0 * math.pi * est / len(s)
    residual = float(np.max(np.abs(steps - expected)))
    return GradientEstimate(est, winding, residual)
