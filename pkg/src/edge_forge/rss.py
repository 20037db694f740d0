"""RSS longitudinal safe distance and the adversary's reward."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError
from .sim_env import SimState, TermReason, WorldConfig, euclid_distance, in_detection_region


@dataclass(frozen=True)
class RssParams:
    rho: float = 0.5
    a_max_accel: float = 2.0
    a_min_brake: float = 4.0
    a_max_brake: float = 8.0

    def __post_init__(self) -> None:
        for name in ("rho", "a_min_brake", "a_max_brake"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"rss.{name} must be finite and > 0, got {value!r}")
        if not math.isfinite(self.a_max_accel) or self.a_max_accel < 0:
            raise ConfigError(f"rss.a_max_accel must be finite and >= 0, got {self.a_max_accel!r}")


class RewardCause(str, enum.Enum):
    UNSAFE_DISTANCE = "UnsafeDistance"
    SAFE_DISTANCE = "SafeDistance"
    OUT_OF_ROI_OR_COLLISION = "OutOfRoiOrCollision"


@dataclass(frozen=True)
class RewardValue:
    value: int
    cause: RewardCause


def safe_longitudinal_distance(v_r: float, v_f: float, p: RssParams) -> float:
    """Minimum gap that lets the rear vehicle stop if the front one brakes hard.

    ``v_r`` is the rear (ego) speed, ``v_f`` the front object's speed.  The
    raw formula goes negative when the front object is much faster; the
    result is clamped at zero.
    """
    for name, v in (("v_r", v_r), ("v_f", v_f)):
        if not math.isfinite(v) or v < 0:
            raise DomainError(f"{name} must be finite and >= 0, got {v!r}")
    rho = p.rho
    response = v_r * rho + 0.5 * p.a_max_accel * rho * rho
    rear_stop = (v_r + rho * p.a_max_accel) ** 2 / (2.0 * p.a_min_brake)
    front_stop = v_f * v_f / (2.0 * p.a_max_brake)
    return max(0.0, response + rear_stop - front_stop)


def is_dangerous(d_eucl: float, d_min: float) -> bool:
    return d_eucl < d_min


def compute_reward(state: SimState, config: WorldConfig, p: RssParams) -> RewardValue:
    # The pedestrian is scored as a stationary front object (v_f = 0).
    if state.term_reason is TermReason.COLLISION or not in_detection_region(state, config):
        return RewardValue(0, RewardCause.OUT_OF_ROI_OR_COLLISION)
    d_min = safe_longitudinal_distance(state.ego_speed, 0.0, p)
    if is_dangerous(euclid_distance(state), d_min):
        return RewardValue(2, RewardCause.UNSAFE_DISTANCE)
    return RewardValue(-2, RewardCause.SAFE_DISTANCE)
