"""Per-stream SINR and Gaussian rate."""

from __future__ import annotations

import math
from typing import Iterable

from .errors import NumericError

__all__ = ["sinr", "rate"]


def sinr(desired_gain: complex, residual_gains: Iterable[complex] = (),
         noise_amp: float = 0.0, p_eff: float = 1.0) -> float:
    """SINR of one stream received with unit-variance destination noise.

    Parameters
    ----------
    desired_gain : complex
        Effective coefficient of the wanted stream.
    residual_gains : iterable of complex
        Effective coefficients of interfering streams left after cancellation.
    noise_amp : float
        Variance of relay noise forwarded to the destination, on top of the
        destination's own unit-variance noise.
    p_eff : float
        Power of each stream before the effective coefficients are applied.
    """
    if noise_amp < 0 or p_eff < 0:
        raise NumericError(f"noise_amp and p_eff must be nonnegative, got {noise_amp}, {p_eff}")
    interference = sum(abs(r) ** 2 for r in residual_gains) * p_eff
    denom = interference + noise_amp + 1.0
    if not denom > 0 or not math.isfinite(denom):
        raise NumericError(f"invalid SINR denominator {denom}")
    return abs(desired_gain) ** 2 * p_eff / denom


def rate(sinr_value: float) -> float:
    """Gaussian point-to-point rate ``log2(1 + sinr)`` in bits per channel use."""
    if sinr_value < 0 or math.isnan(sinr_value):
        raise NumericError(f"SINR must be nonnegative, got {sinr_value}")
    return math.log2(1.0 + sinr_value)
