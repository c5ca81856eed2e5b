"""E-model voice quality scoring (R-factor and MOS).

Only the delay impairment Id and the equipment/loss impairment Ie vary;
every other factor sits at its default, which reduces the rating to
``R = 94.2 - Ie - Id``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

R_DEFAULT = 94.2
DEFAULT_IS = 5.8
DEFAULT_A = 0.0

# delay impairment: Id = 0.024 d + 0.11 (d - 177.3) H(d - 177.3)
ID_SLOPE = 0.024
ID_KNEE_MS = 177.3
ID_KNEE_SLOPE = 0.11

# (gamma1, gamma2, gamma3) for Ie = g1 + g2 ln(1 + g3 e)
CODEC_IE_PARAMS = {
    "g711": (0.0, 30.0, 15.0),
    "pcm": (0.0, 30.0, 15.0),
}


def compute_id(mouth_to_ear_delay_ms: float) -> float:
    d = mouth_to_ear_delay_ms
    if d < 0 or math.isnan(d):
        raise ValueError(f"delay must be non-negative, got {d}")
    id_ = ID_SLOPE * d
    if d > ID_KNEE_MS:
        id_ += ID_KNEE_SLOPE * (d - ID_KNEE_MS)
    return id_


def compute_ie(loss_fraction: float, codec: str = "g711") -> float:
    if not 0.0 <= loss_fraction <= 1.0:
        raise ValueError(f"loss fraction must be in [0, 1], got {loss_fraction}")
    try:
        g1, g2, g3 = CODEC_IE_PARAMS[codec.lower()]
    except KeyError:
        raise ValueError(f"no impairment parameters for codec {codec!r}") from None
    return g1 + g2 * math.log1p(g3 * loss_fraction)


def compute_r(ie: float, id_: float) -> float:
    return R_DEFAULT - ie - id_


def compute_r_full(is_: float = DEFAULT_IS, ie: float = 0.0, id_: float = 0.0,
                   a: float = DEFAULT_A) -> float:
    """Unreduced rating 100 - Is - Ie - Id + A; defaults reduce it to 94.2 - Ie - Id."""
    return 100.0 - is_ - ie - id_ + a


def r_to_mos(r: float) -> float:
    if r <= 0:
        return 1.0
    if r >= 100:
        return 4.5
    mos = 1 + 0.035 * r + 7e-6 * r * (r - 60) * (100 - r)
    # the cubic dips to ~0.994 for 0 < r < 6.5; clamping keeps MOS monotone in r
    return min(4.5, max(1.0, mos))


@dataclass(frozen=True)
class VoiceWindowStats:
    start: int
    end: int
    mean_mouth_to_ear_delay: float
    packet_loss_fraction: float
    received: int = 1
    jitter_ms: float = 0.0

    def __post_init__(self):
        if self.received > 0:
            if self.mean_mouth_to_ear_delay < 0:
                raise ValueError("delay must be non-negative")
            if not 0.0 <= self.packet_loss_fraction <= 1.0:
                raise ValueError("loss must be in [0, 1]")


@dataclass(frozen=True)
class VoiceQualityScore:
    r_value: float
    mos: float
    id_component: float
    ie_component: float
    no_data: bool = False


NO_DATA = VoiceQualityScore(math.nan, math.nan, math.nan, math.nan, no_data=True)


def score_window(stats: VoiceWindowStats, codec: str = "g711") -> VoiceQualityScore:
    if stats.received <= 0:
        return NO_DATA
    ie = compute_ie(stats.packet_loss_fraction, codec)
    id_ = compute_id(stats.mean_mouth_to_ear_delay)
    r = compute_r(ie, id_)
    return VoiceQualityScore(r, r_to_mos(r), id_, ie)
