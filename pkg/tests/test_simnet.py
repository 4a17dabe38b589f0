"""Network layer tests: delay law, sampling, timers, ordering, determinism."""

import math

import pytest
from scipy import stats

from snowlab.simnet import (
    K_HEAR,
    K_TIMER,
    LANE_ADV,
    NetworkConfig,
    World,
    sample_by_stake,
    substream,
)


class Sink:
    """Records every event it is handed."""

    def __init__(self):
        self.log = []

    def start(self, ctx):
        pass

    def handle(self, kind, data, ctx):
        self.log.append((ctx.now, kind, data))


def make_world(n=2, lam=10.0, drop=0.0, seed=1, f=0, stake=None):
    w = World(NetworkConfig(n=n, f=f, lam=lam, stake=stake, drop_rate=drop), seed)
    for pid in range(n):
        w.add_party(pid, Sink())
    return w


def test_exponential_delay_mean_and_law():
    w = make_world(lam=10.0, seed=42)
    ctx = w.ctxs[0]
    n = 100_000
    for _ in range(n):
        ctx.send(1, K_HEAR, None)
    w.run()
    times = [t for t, _, _ in w.parties[1].log]
    mean = sum(times) / n
    assert abs(mean - 0.1) / 0.1 < 0.02
    # distribution check at 1% significance
    res = stats.kstest(times, "expon", args=(0, 0.1))
    assert res.pvalue > 0.01


def test_drop_rate_one_never_delivers():
    w = make_world(drop=1.0)
    w.ctxs[0].send(1, K_HEAR, None)
    w.run()
    assert w.parties[1].log == []


def test_gossip_fanout():
    w = make_world(n=5)
    w.ctxs[0].gossip(K_HEAR, "x")
    w.run()
    heard = [pid for pid in range(5) if w.parties[pid].log]
    assert heard == [1, 2, 3, 4]


def test_targeted_gossip_single_hear():
    w = make_world(n=5)
    w.ctxs[0].gossip(K_HEAR, "x", targets=[3])
    w.run()
    heard = [pid for pid in range(5) if w.parties[pid].log]
    assert heard == [3]


def test_sample_uniform_subsets_chi_square():
    rng = substream(7, "test")
    others = [1, 2, 3, 4]
    counts = {}
    n = 100_000
    for _ in range(n):
        got = frozenset(sample_by_stake(others, 2, rng))
        counts[got] = counts.get(got, 0) + 1
    assert len(counts) == 6
    res = stats.chisquare(list(counts.values()))
    assert res.pvalue > 0.01


def test_sample_weighted_excluding_whale_is_uniform():
    rng = substream(9, "test")
    stake = [10**12, 1.0, 1.0, 1.0, 1.0]
    others = [1, 2, 3, 4]   # whale (party 0) is the sampler, excluded
    counts = {}
    n = 100_000
    for _ in range(n):
        got = frozenset(sample_by_stake(others, 2, rng, stake))
        counts[got] = counts.get(got, 0) + 1
    res = stats.chisquare(list(counts.values()))
    assert res.pvalue > 0.01


def test_sample_weighted_prefers_stake():
    rng = substream(11, "test")
    stake = [1.0, 50.0, 1.0, 1.0]
    hits = 0
    n = 20_000
    for _ in range(n):
        if 1 in sample_by_stake([1, 2, 3], 1, rng, stake):
            hits += 1
    assert hits / n > 0.9


def test_sample_all_others_and_error():
    rng = substream(3, "test")
    assert sorted(sample_by_stake([1, 2, 3], 3, rng)) == [1, 2, 3]
    with pytest.raises(ValueError):
        sample_by_stake([1, 2, 3], 4, rng)


def test_timer_cancel_and_restart():
    w = make_world()
    ctx = w.ctxs[0]
    ctx.start_timer("a", 1.0)
    ctx.stop_timer("a")
    ctx.start_timer("b", 1.0)
    ctx.start_timer("b", 2.0)   # restart replaces: single fire at the later deadline
    ctx.stop_timer("zzz")       # stopping an unknown timer is fine
    ctx.stop_timer("zzz")
    w.run()
    fires = [
        (t, data) for t, kind, data in w.parties[0].log
        if kind == K_TIMER and ctx.timer_live(data[0], data[1])
    ]
    assert fires == [(2.0, ("b", 2))]


def test_adversary_zero_delay_beats_pending_honest_messages():
    class Adv:
        def on_start(self, world):
            pass

        def send_delay(self, frm, to, kind, data):
            return 0.0

    w = make_world(n=3, f=1)
    w.set_adversary(Adv(), corrupted={2})
    # honest message already pending for the same instant
    w.sched.push_at(0.0, 1, 1, K_HEAR, "honest")
    w.ctxs[2].send(1, K_HEAR, "malicious")
    w.run()
    kinds = [data for _, _, data in w.parties[1].log]
    assert kinds == ["malicious", "honest"]


def test_horizon_cuts_processing():
    w = make_world()
    w.sched.push_at(0.5, 1, 1, K_HEAR, "early")
    w.sched.push_at(2.0, 1, 1, K_HEAR, "late")
    w.run(horizon=1.0)
    assert [d for _, _, d in w.parties[1].log] == ["early"]
    assert w.sched.now == 1.0


def test_same_seed_same_schedule():
    def run_once():
        w = make_world(n=6, seed=77)
        for i in range(40):
            w.ctxs[i % 6].gossip(K_HEAR, i)
        w.run()
        return [tuple(p.log) for p in w.parties]

    assert run_once() == run_once()


def test_substreams_independent_of_party_count():
    a = substream(5, "delay", 3)
    b = substream(5, "delay", 3)
    assert [a.random() for _ in range(4)] == [b.random() for _ in range(4)]
    c = substream(5, "delay", 4)
    assert a.random() != c.random()


def test_config_validation():
    with pytest.raises(ValueError, match="lam"):
        NetworkConfig(n=3, lam=0).validate()
    with pytest.raises(ValueError, match="stake"):
        NetworkConfig(n=3, stake=[1.0, 2.0]).validate()
    with pytest.raises(ValueError, match="f"):
        NetworkConfig(n=3, f=5).validate()
