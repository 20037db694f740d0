"""Flat 2D pedestrian-crossing world.

The ego vehicle drives along +x towards a crosswalk at ``crosswalk_x``; the
pedestrian starts on one side of the road and walks across it along y.  The
adversary chooses the pedestrian's walking speed every tick, the system under
test (a callable returning an ego acceleration) drives the ego vehicle.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, UsageError

N_ACTIONS = 40
SPEED_STEP = 0.25

# Reference controller constants.
CAS_BRAKE_DECEL = 4.0
CAS_MAX_ACCEL = 2.0
CAS_GAIN = 1.0


class TermReason(str, enum.Enum):
    RUNNING = "Running"
    COLLISION = "Collision"
    MAX_TRAVEL = "MaxTravel"
    MAX_TIME = "MaxTime"


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 0.1
    ego_start_x: float = 0.0
    ego_target_speed: float = 8.0
    ego_speed_noise_sigma: float = 0.5
    crosswalk_x: float = 38.0
    lane_half_width: float = 3.5
    ped_start_offsets: tuple[float, float] = (-5.0, 5.0)
    detection_range: float = 10.0
    roi_lateral_halfwidth: float = 2.0
    collision_radius: float = 0.5
    max_travel: float = 40.0
    max_sim_time: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ped_start_offsets", tuple(float(v) for v in self.ped_start_offsets))
        positive = ("dt", "detection_range", "collision_radius", "max_travel", "max_sim_time",
                    "roi_lateral_halfwidth", "lane_half_width")
        for name in positive:
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"world.{name} must be finite and > 0, got {value!r}")
        if self.ego_target_speed < 0 or self.ego_speed_noise_sigma < 0:
            raise ConfigError("world.ego_target_speed and world.ego_speed_noise_sigma must be >= 0")
        if len(self.ped_start_offsets) != 2:
            raise ConfigError(
                f"world.ped_start_offsets needs exactly 2 entries, got {len(self.ped_start_offsets)}")
        for off in self.ped_start_offsets:
            if not math.isfinite(off) or abs(off) <= self.lane_half_width:
                raise ConfigError(f"world.ped_start_offsets entry {off!r} must lie outside the lane")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"world.seed must be a non-negative integer, got {self.seed!r}")

    @property
    def max_steps(self) -> int:
        return math.ceil(self.max_sim_time / self.dt - 1e-9)


@dataclass(frozen=True)
class SimState:
    t: float
    ego_x: float
    ego_y: float
    ego_speed: float
    ped_x: float
    ped_y: float
    ped_speed: float
    # +1 or -1: the pedestrian always walks towards (and then past) the far kerb.
    ped_dir: float
    # Per-episode cruise speed the controller returns to; drawn once at reset.
    cruise_speed: float
    steps: int = 0
    terminated: bool = False
    term_reason: TermReason = TermReason.RUNNING
    rng_state: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class AgentState:
    rel_speed: float
    euclid_dist: float


@dataclass(frozen=True)
class PedAction:
    index: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < N_ACTIONS:
            raise ValueError(f"action index must be in [0, {N_ACTIONS - 1}], got {self.index}")

    @property
    def speed(self) -> float:
        return self.index * SPEED_STEP


Sut = Callable[[SimState, WorldConfig], float]


def reset(config: WorldConfig, rng: np.random.Generator) -> SimState:
    """Place ego and pedestrian in a freshly randomised initial state."""
    sigma = config.ego_speed_noise_sigma
    speed = config.ego_target_speed + sigma * rng.standard_normal()
    speed = min(max(speed, 0.0), config.ego_target_speed + 3 * sigma)
    offset = config.ped_start_offsets[int(rng.integers(2))]
    ped_speed = int(rng.integers(N_ACTIONS)) * SPEED_STEP
    return SimState(
        t=0.0,
        ego_x=config.ego_start_x,
        ego_y=0.0,
        ego_speed=float(speed),
        ped_x=config.crosswalk_x,
        ped_y=offset,
        ped_speed=ped_speed,
        ped_dir=-1.0 if offset > 0 else 1.0,
        cruise_speed=float(speed),
        rng_state=rng.bit_generator.state,
    )


def episode_rng(seed: int, episode_id: int) -> np.random.Generator:
    """Independent reset stream for one episode."""
    return np.random.default_rng([seed, episode_id])


def euclid_distance(state: SimState) -> float:
    return math.hypot(state.ped_x - state.ego_x, state.ped_y - state.ego_y)


def observe(state: SimState) -> AgentState:
    return AgentState(rel_speed=state.ped_speed - state.ego_speed, euclid_dist=euclid_distance(state))


def in_detection_region(state: SimState, config: WorldConfig) -> bool:
    if state.ped_x <= state.ego_x:
        return False
    if abs(state.ped_y - state.ego_y) > config.roi_lateral_halfwidth:
        return False
    return euclid_distance(state) <= config.detection_range


def cas_control(state: SimState, config: WorldConfig) -> float:
    """Reference collision-avoidance controller.

    Brakes hard while something is in the detection region, otherwise
    steers the speed back to the cruise speed with a proportional law.
    """
    if in_detection_region(state, config):
        return -CAS_BRAKE_DECEL
    accel = CAS_GAIN * (state.cruise_speed - state.ego_speed)
    return min(max(accel, -CAS_BRAKE_DECEL), CAS_MAX_ACCEL)


def _min_separation(r0x: float, r0y: float, r1x: float, r1y: float) -> float:
    # closest approach of the relative position over one linear step
    dx, dy = r1x - r0x, r1y - r0y
    denom = dx * dx + dy * dy
    s = 1.0 if denom == 0.0 else min(max(-(r0x * dx + r0y * dy) / denom, 0.0), 1.0)
    return math.hypot(r0x + s * dx, r0y + s * dy)


def step(
    state: SimState,
    action: PedAction | int,
    config: WorldConfig,
    sut: Sut = cas_control,
) -> tuple[SimState, AgentState, bool]:
    if state.terminated:
        raise UsageError("step() called on a terminated episode; call reset() first")
    index = action.index if isinstance(action, PedAction) else PedAction(int(action)).index
    ped_speed = index * SPEED_STEP
    ped_y = state.ped_y + state.ped_dir * ped_speed * config.dt
    # The SUT sees the pedestrian's new position before the ego moves.
    seen = dataclasses.replace(state, ped_y=ped_y, ped_speed=ped_speed)
    accel = float(sut(seen, config))
    ego_speed = max(state.ego_speed + accel * config.dt, 0.0)
    ego_x = state.ego_x + ego_speed * config.dt
    steps = state.steps + 1

    reason = TermReason.RUNNING
    sep = _min_separation(state.ped_x - state.ego_x, state.ped_y - state.ego_y,
                          state.ped_x - ego_x, ped_y - state.ego_y)
    if sep < config.collision_radius:
        reason = TermReason.COLLISION
    elif ego_x - config.ego_start_x >= config.max_travel:
        reason = TermReason.MAX_TRAVEL
    elif steps >= config.max_steps:
        reason = TermReason.MAX_TIME

    new = dataclasses.replace(
        seen,
        t=steps * config.dt,
        ego_x=ego_x,
        ego_speed=ego_speed,
        steps=steps,
        terminated=reason is not TermReason.RUNNING,
        term_reason=reason,
    )
    return new, observe(new), new.terminated
