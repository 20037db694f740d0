"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edge_forge import cli, neural
from edge_forge.agent import (DqnAgent, QTable, ReplayBuffer, TrainConfig, Transition, epsilon_at,
                              run_training, tabular_update)
from edge_forge.neural import gradient_check, mlp_init
from edge_forge.rss import RssParams, compute_reward, safe_longitudinal_distance
from edge_forge.sim_env import N_ACTIONS, AgentState, SimState, TermReason, WorldConfig
from edge_forge.validation import (Outcome, cumulative_failures, convergence_episode, read_log,
                                   reward_curve, run_episode, success_probability)

from oracles import TOY_GAMMA, TOY_P, TOY_R, rss_by_hand, toy_step, value_iteration

SEEDS = (0, 1, 2)
EPISODES = 1500
WINDOW = 300
EVAL_EPISODES = 200


def report(n, ok, text):
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {text}")
    return ok


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """Default-config training, one run directory per seed."""
    root = tmp_path_factory.mktemp("desk")
    runs = {}
    for seed in SEEDS:
        out = root / f"seed{seed}"
        t0 = time.perf_counter()
        assert cli.cmd_train(None, out, [f"world.seed={seed}", f"agent.seed={seed}"]) == 0
        runs[seed] = (out, time.perf_counter() - t0)
    return runs


def test_1_rss_formula():
    vectors = [
        (10, 0, 0.5, 2, 4, 8), (0, 0, 0.5, 0, 4, 8), (0, 10, 0.5, 0, 4, 8), (8, 0, 0.5, 2, 4, 8),
        (8, 3, 0.5, 2, 4, 8), (25, 20, 1.0, 3, 5, 9), (2.5, 0, 0.25, 1.5, 3, 6), (30, 31, 0.1, 0.5, 6, 7),
        (13.75, 4.25, 0.75, 2.5, 3.5, 10), (0.5, 12, 2.0, 4, 8, 8), (5, 5, 0.5, 2, 4, 4), (40, 0, 1.5, 1, 2, 3),
    ]
    worst, clamps = 0.0, 0
    for v_r, v_f, rho, acc, bmin, bmax in vectors:
        expected = rss_by_hand(v_r, v_f, rho, acc, bmin, bmax)
        got = safe_longitudinal_distance(v_r, v_f, RssParams(rho, acc, bmin, bmax))
        clamps += expected == 0.0
        worst = max(worst, abs(got - expected) / max(abs(expected), 1e-300) if expected else abs(got))
    ok = report(1, worst <= 1e-12 and clamps >= 1 and len(vectors) >= 10,
                f"RSS distance on {len(vectors)} vectors ({clamps} clamped), max rel err {worst:.2e} (tol 1e-12)")
    assert ok


def test_2_gradient_check():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    errors = []
    for k in range(20):
        h1, h2 = (int(x) for x in rng.integers(2, 7, size=2))
        net = mlp_init((2, h1, h2, N_ACTIONS), seed=k)
        for b in net.biases:
            b[:] = rng.normal(scale=0.3, size=b.shape)
        n = int(rng.integers(2, 9))
        x, y = rng.normal(size=(n, 2)), rng.normal(scale=2.0, size=n)
        mask = np.zeros((n, N_ACTIONS), dtype=bool)
        mask[np.arange(n), rng.integers(0, N_ACTIONS, size=n)] = True
        errors.append(gradient_check(net, x, y, mask, h=1e-5))
    elapsed = time.perf_counter() - t0
    ok = report(2, max(errors) < 1e-4 and elapsed < 10,
                f"gradient check on 20 random nets, max rel err {max(errors):.2e} (tol 1e-4), {elapsed:.1f}s (< 10s)")
    assert ok


def test_3_tabular_oracle():
    t0 = time.perf_counter()
    q_star = value_iteration(TOY_P, TOY_R, TOY_GAMMA)
    table = QTable(n_states=2, n_actions=2)
    rng = np.random.default_rng(3)
    s = 0
    for _ in range(100_000):
        a = int(rng.integers(2)) if rng.random() < 0.2 else int(np.argmax(table.values[s]))
        s2, r = toy_step(s, a)
        tabular_update(table, Transition(s, a, r, s2, False), alpha=0.1, gamma=TOY_GAMMA)
        s = s2
    err = float(np.max(np.abs(table.values - q_star)))
    elapsed = time.perf_counter() - t0
    ok = report(3, err < 1e-2 and elapsed < 10,
                f"tabular Q-learning vs value iteration after 1e5 updates, max |Q-Q*| {err:.2e} (tol 1e-2), "
                f"{elapsed:.1f}s")
    assert ok


def test_4_biasing(desk_runs):
    lines, ok_all = [], True
    for seed, (out, elapsed) in desk_runs.items():
        records = read_log(out / "episodes.jsonl")
        fails = [r.outcome is Outcome.FAILURE for r in records]
        first, last = sum(fails[:WINDOW]), sum(fails[-WINDOW:])
        curve = reward_curve(records, 100)
        conv = convergence_episode(curve, 0.1 * abs(curve[-1]), 200)
        ok = len(records) == EPISODES and last >= 2 * first and last > 0 and conv is not None
        ok_all &= ok
        lines.append(f"seed {seed}: failures first/last {WINDOW} = {first}/{last}, "
                     f"convergence episode {conv}, {elapsed:.0f}s")
    ok = report(4, ok_all, "biasing over 3 seeds x 1500 episodes: " + "; ".join(lines))
    assert ok


def test_5_probability_arithmetic():
    outcomes = [Outcome.SUCCESS] * 7277 + [Outcome.FAILURE] * 2723
    p = success_probability(outcomes)
    ok = report(5, p == 0.7277, f"p_r for 7277/10000 = {p}")
    assert ok


def test_6_adversary_beats_random(desk_runs):
    world, rss = WorldConfig(), RssParams()
    wins, lines = 0, []
    t0 = time.perf_counter()
    for seed, (out, _) in desk_runs.items():
        net = neural.load(out / "checkpoint_final.json")
        policy_rng = np.random.default_rng([seed, 2])
        eval_seed = 10_000 + seed
        greedy = [run_episode(world, rss, eval_seed, i, lambda o: int(np.argmax(net.forward(
            neural.normalize(o.rel_speed, o.euclid_dist))))) for i in range(EVAL_EPISODES)]
        random = [run_episode(world, rss, eval_seed, i, lambda o: int(policy_rng.integers(N_ACTIONS)))
                  for i in range(EVAL_EPISODES)]
        n_t = cumulative_failures(greedy)[-1]
        n_r = cumulative_failures(random)[-1]
        wins += n_t > n_r
        lines.append(f"seed {seed}: trained {n_t} vs random {n_r}")
    elapsed = time.perf_counter() - t0
    ok = report(6, wins >= 2 and elapsed < 60,
                f"failure scenarios over {EVAL_EPISODES} paired episodes, trained ahead in {wins}/3 "
                f"({'; '.join(lines)}), {elapsed:.0f}s")
    assert ok


def test_7_determinism_and_replay(desk_runs, tmp_path):
    out, _ = desk_runs[SEEDS[0]]
    t0 = time.perf_counter()
    replay_code = cli.cmd_replay(out / "episodes.jsonl")
    rerun_code = cli.cmd_train(out / "manifest.json", tmp_path / "rerun")
    same = (tmp_path / "rerun" / "episodes.jsonl").read_bytes() == (out / "episodes.jsonl").read_bytes()
    elapsed = time.perf_counter() - t0
    ok = report(7, replay_code == 0 and rerun_code == 0 and same,
                f"replay of {EPISODES} logged episodes exit {replay_code}; rerun from manifest exit {rerun_code}, "
                f"byte-identical log {same}; {elapsed:.0f}s")
    assert ok


# --- criterion 8: invariants under randomized inputs -----------------------------

def _transition(i):
    return Transition(AgentState(float(i), 1.0), 0, 0.0, AgentState(float(i), 1.0), False)


@settings(max_examples=60, deadline=None)
@given(capacity=st.integers(1, 64), pushes=st.integers(0, 300))
def _buffer_fifo(capacity, pushes):
    buf = ReplayBuffer(capacity)
    for i in range(pushes):
        buf.push(_transition(i))
    assert len(buf) == min(capacity, pushes) <= capacity
    assert [t.state.rel_speed for t in buf] == [float(i) for i in range(max(0, pushes - capacity), pushes)]


@settings(max_examples=200, deadline=None)
@given(a=st.integers(0, 10**6), b=st.integers(0, 10**6), decay=st.floats(0.5, 0.9999),
       floor=st.floats(1e-4, 0.5))
def _epsilon_schedule(a, b, decay, floor):
    cfg = TrainConfig(eps_decay=decay, eps_min=floor)
    lo, hi = sorted((a, b))
    assert floor <= epsilon_at(hi, cfg) <= epsilon_at(lo, cfg) <= 1.0


@settings(max_examples=3, deadline=None)
@given(seed=st.integers(0, 1000), every=st.integers(1, 4))
def _target_sync(seed, every):
    train = TrainConfig(max_episodes=every, target_sync_every=every, seed=seed)
    agent = DqnAgent(train)
    list(run_training(WorldConfig(seed=seed), RssParams(), train, agent=agent))
    x = np.random.default_rng(seed).normal(size=(64, 2)) * 3
    assert agent.sync_count == 1
    np.testing.assert_array_equal(agent.pred.forward(x), agent.target.forward(x))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def _partition(seed, n):
    rng = np.random.default_rng(seed)
    recs = [run_episode(WorldConfig(), RssParams(), seed, i, lambda o: int(rng.integers(N_ACTIONS)))
            for i in range(n)]
    fails = cumulative_failures(recs)[-1]
    p = success_probability(recs)
    assert all((r.success_fraction > 0.75) == (r.outcome is Outcome.SUCCESS) for r in recs)
    assert p == round((n - fails) / n, 4)


@settings(max_examples=300, deadline=None)
@given(v=st.floats(0, 20), px=st.floats(-20, 60), py=st.floats(-10, 10), hit=st.booleans())
def _reward_codomain(v, px, py, hit):
    s = SimState(t=0.0, ego_x=0.0, ego_y=0.0, ego_speed=v, ped_x=px, ped_y=py, ped_speed=0.0,
                 ped_dir=1.0, cruise_speed=8.0, terminated=hit,
                 term_reason=TermReason.COLLISION if hit else TermReason.RUNNING)
    assert compute_reward(s, WorldConfig(), RssParams()).value in (-2, 0, 2)


@settings(max_examples=300, deadline=None)
@given(v_r=st.floats(0, 60), v_f=st.floats(0, 60), dv=st.floats(0, 10))
def _rss_monotone(v_r, v_f, dv):
    p = RssParams()
    base = safe_longitudinal_distance(v_r, v_f, p)
    assert safe_longitudinal_distance(v_r + dv, v_f, p) >= base
    assert safe_longitudinal_distance(v_r, v_f + dv, p) <= base


def test_8_invariant_suite():
    t0 = time.perf_counter()
    checks = {"replay buffer FIFO/capacity": _buffer_fifo, "epsilon floor/monotone": _epsilon_schedule,
              "target sync equality": _target_sync, "outcome partition": _partition,
              "reward codomain": _reward_codomain, "RSS monotonicity": _rss_monotone}
    failed = []
    for name, check in checks.items():
        try:
            check()
        except Exception as exc:  # report every property, then fail
            failed.append(f"{name} ({type(exc).__name__})")
    elapsed = time.perf_counter() - t0
    ok = report(8, not failed and elapsed < 30,
                f"{len(checks) - len(failed)}/{len(checks)} invariant properties hold, {elapsed:.1f}s (< 30s)"
                + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok


def test_top_edge_case_fails_late_in_the_episode(desk_runs):
    out, _ = desk_runs[SEEDS[0]]
    records = read_log(out / "episodes.jsonl")
    top = max(records, key=lambda r: (r.total_reward, -r.episode_id))
    first_fail = next(i for i, ts in enumerate(top.timesteps) if ts.classification.value == "FailureTs")
    assert top.failure_timesteps > 0
    assert first_fail >= 30
    assert len(top.timesteps) >= 40
