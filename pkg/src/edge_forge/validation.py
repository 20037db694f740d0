"""Scenario records, pass/fail classification and the success probability."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .errors import ConfigError, UsageError
from .rss import RssParams, compute_reward, safe_longitudinal_distance
from .sim_env import (AgentState, PedAction, SimState, Sut, TermReason, WorldConfig, cas_control,
                      episode_rng, euclid_distance, in_detection_region, observe, reset, step)

FRACTION_BASES = ("all", "roi")


class TimestepClass(str, enum.Enum):
    SUCCESS = "SuccessTs"
    FAILURE = "FailureTs"


class Outcome(str, enum.Enum):
    SUCCESS = "SuccessScenario"
    FAILURE = "FailureScenario"


@dataclass(frozen=True)
class ValidationConfig:
    threshold: float = 0.75
    fraction_basis: str = "all"
    reward_window: int = 100
    top_k: int = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold < 1.0:
            raise ConfigError(f"validation.threshold must lie in [0, 1), got {self.threshold!r}")
        if self.fraction_basis not in FRACTION_BASES:
            raise ConfigError(f"validation.fraction_basis must be one of {FRACTION_BASES}")
        if self.reward_window < 1 or self.top_k < 1:
            raise ConfigError("validation.reward_window and validation.top_k must be >= 1")


@dataclass(frozen=True)
class TimestepRecord:
    t: float
    action: int
    ego_x: float
    ego_y: float
    ego_speed: float
    ped_x: float
    ped_y: float
    ped_speed: float
    d_eucl: float
    d_rss: float
    in_roi: bool
    reward: int
    classification: TimestepClass


@dataclass(frozen=True)
class EpisodeRecord:
    episode_id: int
    seed: int
    timesteps: tuple[TimestepRecord, ...]
    term_reason: TermReason
    total_reward: int
    success_fraction: float
    outcome: Outcome

    @property
    def actions(self) -> list[int]:
        return [ts.action for ts in self.timesteps]

    @property
    def failure_timesteps(self) -> int:
        return sum(ts.classification is TimestepClass.FAILURE for ts in self.timesteps)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["timesteps"] = [asdict(ts) for ts in self.timesteps]
        return json.dumps(doc, default=_enum_value)

    @classmethod
    def from_json(cls, line: str) -> EpisodeRecord:
        doc = json.loads(line)
        try:
            steps = tuple(
                TimestepRecord(**{**ts, "classification": TimestepClass(ts["classification"])})
                for ts in doc["timesteps"])
            return cls(
                episode_id=int(doc["episode_id"]),
                seed=int(doc["seed"]),
                timesteps=steps,
                term_reason=TermReason(doc["term_reason"]),
                total_reward=int(doc["total_reward"]),
                success_fraction=float(doc["success_fraction"]),
                outcome=Outcome(doc["outcome"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed episode record: {exc}") from exc


def _enum_value(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def classify_timestep(d_eucl: float, d_rss: float, in_roi: bool, collided: bool) -> TimestepClass:
    if in_roi and not collided and d_eucl < d_rss:
        return TimestepClass.FAILURE
    return TimestepClass.SUCCESS


def success_fraction(timesteps: Sequence[TimestepRecord], basis: str = "all") -> float:
    if not timesteps:
        raise UsageError("an episode needs at least one timestep")
    pool = timesteps if basis == "all" else [ts for ts in timesteps if ts.in_roi]
    if not pool:
        return 1.0
    ok = sum(ts.classification is TimestepClass.SUCCESS for ts in pool)
    return ok / len(pool)


def classify_episode(ep: EpisodeRecord | Sequence[TimestepRecord], threshold: float = 0.75,
                     basis: str = "all") -> Outcome:
    timesteps = ep.timesteps if isinstance(ep, EpisodeRecord) else ep
    frac = success_fraction(timesteps, basis)
    return Outcome.SUCCESS if frac > threshold else Outcome.FAILURE


def make_timestep(state: SimState, action: int, config: WorldConfig, rss: RssParams) -> TimestepRecord:
    d_eucl = euclid_distance(state)
    d_rss = safe_longitudinal_distance(state.ego_speed, 0.0, rss)
    in_roi = in_detection_region(state, config)
    collided = state.term_reason is TermReason.COLLISION
    return TimestepRecord(
        t=state.t, action=action,
        ego_x=state.ego_x, ego_y=state.ego_y, ego_speed=state.ego_speed,
        ped_x=state.ped_x, ped_y=state.ped_y, ped_speed=state.ped_speed,
        d_eucl=d_eucl, d_rss=d_rss, in_roi=in_roi,
        reward=compute_reward(state, config, rss).value,
        classification=classify_timestep(d_eucl, d_rss, in_roi, collided),
    )


def make_episode(episode_id: int, seed: int, timesteps: Sequence[TimestepRecord],
                 term_reason: TermReason, vcfg: ValidationConfig | None = None) -> EpisodeRecord:
    vcfg = vcfg or ValidationConfig()
    frac = success_fraction(timesteps, vcfg.fraction_basis)
    return EpisodeRecord(
        episode_id=episode_id,
        seed=seed,
        timesteps=tuple(timesteps),
        term_reason=term_reason,
        total_reward=sum(ts.reward for ts in timesteps),
        success_fraction=frac,
        outcome=Outcome.SUCCESS if frac > vcfg.threshold else Outcome.FAILURE,
    )


Policy = Callable[[AgentState], int]
StepHook = Callable[[AgentState, int, int, AgentState, bool], None]


def run_episode(world: WorldConfig, rss: RssParams, seed: int, episode_id: int, policy: Policy,
                sut: Sut = cas_control, vcfg: ValidationConfig | None = None,
                on_step: StepHook | None = None) -> EpisodeRecord:
    """Simulate one scenario from the (seed, episode_id) reset stream.

    ``on_step(obs, action, reward, next_obs, done)`` is called after every
    tick; the learner hooks in there.
    """
    state = reset(world, episode_rng(seed, episode_id))
    obs = observe(state)
    timesteps = []
    while not state.terminated:
        action = int(policy(obs))
        state, next_obs, done = step(state, PedAction(action), world, sut)
        ts = make_timestep(state, action, world, rss)
        timesteps.append(ts)
        if on_step is not None:
            on_step(obs, action, ts.reward, next_obs, done)
        obs = next_obs
    return make_episode(episode_id, seed, timesteps, state.term_reason, vcfg)


def replay_episode(record: EpisodeRecord, world: WorldConfig, rss: RssParams,
                   sut: Sut = cas_control, vcfg: ValidationConfig | None = None) -> EpisodeRecord:
    """Re-simulate a logged episode from its seed and action sequence."""
    actions = iter(record.actions)

    def scripted(_obs: AgentState) -> int:
        try:
            return next(actions)
        except StopIteration:
            raise UsageError(f"episode {record.episode_id}: log ends before the replay terminates")

    return run_episode(world, rss, record.seed, record.episode_id, scripted, sut, vcfg)


def first_divergence(a: EpisodeRecord, b: EpisodeRecord) -> int | None:
    """Index of the first differing timestep, -1 for header mismatch, None if equal."""
    for i, (x, y) in enumerate(zip(a.timesteps, b.timesteps)):
        if x != y:
            return i
    if len(a.timesteps) != len(b.timesteps):
        return min(len(a.timesteps), len(b.timesteps))
    if a != b:
        return -1
    return None


# --- aggregate statistics -------------------------------------------------

def _outcomes(records: Iterable) -> list[Outcome]:
    return [getattr(r, "outcome", r) for r in records]


def success_probability(records: Iterable) -> float:
    """Share of success scenarios, rounded to 4 decimals.

    Accepts episode records or bare :class:`Outcome` values.
    """
    outcomes = _outcomes(records)
    if not outcomes:
        raise UsageError("success probability of an empty record set is undefined")
    wins = sum(o is Outcome.SUCCESS for o in outcomes)
    return round(float(Fraction(wins, len(outcomes))), 4)


def cumulative_failures(records: Iterable) -> list[int]:
    out, running = [], 0
    for o in _outcomes(records):
        running += o is Outcome.FAILURE
        out.append(running)
    return out


def reward_curve(records: Iterable, window: int = 100) -> list[float]:
    """Trailing moving average of episode total reward."""
    if window < 1:
        raise UsageError("window must be >= 1")
    totals = [getattr(r, "total_reward", r) for r in records]
    curve, acc = [], 0.0
    for i, value in enumerate(totals):
        acc += value
        if i >= window:
            acc -= totals[i - window]
        curve.append(acc / min(i + 1, window))
    return curve


def convergence_episode(curve: Sequence[float], tolerance: float, span: int) -> int | None:
    """First index whose ``span``-long window varies by at most ``tolerance``."""
    if span < 2:
        raise UsageError("span must be >= 2")
    for i in range(len(curve) - span + 1):
        window = curve[i:i + span]
        if max(window) - min(window) <= tolerance:
            return i
    return None


def extract_edge_cases(records: Iterable[EpisodeRecord], k: int) -> list[EpisodeRecord]:
    if k < 1:
        raise UsageError("k must be >= 1")
    ranked = sorted(records, key=lambda r: (-r.total_reward, r.episode_id))
    return ranked[:k]


@dataclass
class ValidationReport:
    total_episodes: int
    success_count: int
    failure_count: int
    p_r: float
    cumulative_failures: list[int] = field(repr=False)
    reward_moving_average: list[float] = field(repr=False)
    edge_cases: list[dict]
    convergence_episode: int | None = None

    def summary(self) -> dict:
        return {
            "total_episodes": self.total_episodes,
            "success_count": self.success_count,
            "failure_count": self.failure_count,
            "p_r": self.p_r,
            "convergence_episode": self.convergence_episode,
            "final_reward_moving_average": (self.reward_moving_average[-1]
                                            if self.reward_moving_average else None),
            "edge_cases": self.edge_cases,
        }


def build_report(records: Sequence[EpisodeRecord], vcfg: ValidationConfig | None = None) -> ValidationReport:
    vcfg = vcfg or ValidationConfig()
    records = list(records)
    if not records:
        raise UsageError("cannot build a report from zero episodes")
    fails = cumulative_failures(records)
    curve = reward_curve(records, vcfg.reward_window)
    final = curve[-1]
    span = min(200, len(curve))
    conv = convergence_episode(curve, 0.1 * abs(final), span) if span >= 2 else None
    return ValidationReport(
        total_episodes=len(records),
        success_count=len(records) - fails[-1],
        failure_count=fails[-1],
        p_r=success_probability(records),
        cumulative_failures=fails,
        reward_moving_average=curve,
        edge_cases=[{"episode_id": r.episode_id, "total_reward": r.total_reward,
                     "failure_timesteps": r.failure_timesteps, "outcome": r.outcome.value}
                    for r in extract_edge_cases(records, vcfg.top_k)],
        convergence_episode=conv,
    )


# --- episode log I/O --------------------------------------------------------

def append_log(path: str | Path, record: EpisodeRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def iter_log(path: str | Path) -> Iterator[EpisodeRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield EpisodeRecord.from_json(line)


def read_log(path: str | Path) -> list[EpisodeRecord]:
    return list(iter_log(path))

