"""Deterministic discrete-event network.

Honest point-to-point messages and gossip arrive after independent
exponentially distributed delays; messages sent by corrupted parties arrive
whenever the adversary schedules them, ahead of honest traffic at the same
instant.  Everything (delays, sampling, selections) draws from substreams
derived from one master seed, so a run is a pure function of its config.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass

# event kinds
K_SUBMIT = 0
K_HEAR = 1
K_QUERY = 2
K_VOTE = 3
K_FETCH = 4
K_FETCH_REPLY = 5
K_TIMER = 6
K_ADV_STEP = 7
K_SB_QUERY = 8
K_SB_VOTE = 9

LANE_ADV = 0
LANE_NET = 1

KIND_NAMES = {
    K_SUBMIT: "submit",
    K_HEAR: "hear",
    K_QUERY: "query",
    K_VOTE: "vote",
    K_FETCH: "fetch",
    K_FETCH_REPLY: "fetchReply",
    K_TIMER: "timer",
    K_ADV_STEP: "advStep",
    K_SB_QUERY: "sbQuery",
    K_SB_VOTE: "sbVote",
}


def substream(seed: int, *labels) -> random.Random:
    """Independent RNG derived from the master seed and a label path.

    Streams are keyed, not split sequentially, so adding a party or a
    subsystem never perturbs the draws of another.
    """
    h = hashlib.sha256(repr((seed,) + labels).encode()).digest()
    return random.Random(int.from_bytes(h[:16], "big"))


@dataclass
class NetworkConfig:
    n: int
    f: int = 0
    lam: float = 10.0           # delay rate per second; mean delay = 1/lam
    stake: list | None = None
    drop_rate: float = 0.0

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("network.n: need at least two parties")
        if not (0 <= self.f <= self.n):
            raise ValueError("network.f: must be between 0 and n")
        if self.lam <= 0:
            raise ValueError("network.lam: delay rate must be positive")
        if self.stake is not None:
            if len(self.stake) != self.n:
                raise ValueError("network.stake: need one weight per party")
            if any(w <= 0 for w in self.stake):
                raise ValueError("network.stake: weights must be positive")
        if not (0.0 <= self.drop_rate <= 1.0):
            raise ValueError("network.drop_rate: must be in [0, 1]")


def sample_by_stake(others: list, k: int, rng: random.Random, stake=None) -> list:
    """Draw k distinct parties, probability proportional to stake.

    ``others`` must already exclude the sampling party.
    """
    if k > len(others):
        raise ValueError(f"cannot sample {k} from {len(others)} parties")
    if stake is None:
        return rng.sample(others, k)
    pool = list(others)
    weights = [stake[p] for p in pool]
    out = []
    total = sum(weights)
    for _ in range(k):
        x = rng.random() * total
        acc = 0.0
        idx = len(pool) - 1
        for i, w in enumerate(weights):
            acc += w
            if x < acc:
                idx = i
                break
        out.append(pool[idx])
        total -= weights[idx]
        pool[idx] = pool[-1]
        weights[idx] = weights[-1]
        pool.pop()
        weights.pop()
    return out


class Scheduler:
    __slots__ = ("heap", "now", "_seq")

    def __init__(self):
        self.heap: list = []
        self.now = 0.0
        self._seq = 0

    def push_at(self, t: float, lane: int, dest: int, kind: int, data) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, lane, self._seq, dest, kind, data))

    def push(self, delay: float, dest: int, kind: int, data, lane: int = LANE_NET) -> None:
        self.push_at(self.now + delay, lane, dest, kind, data)


class Ctx:
    """Per-party handle onto the world: messaging, timers, rng, trace."""

    __slots__ = ("world", "pid", "rng_sample", "rng_select", "_rng_delay",
                 "_timer_gen", "others")

    def __init__(self, world: "World", pid: int):
        self.world = world
        self.pid = pid
        seed = world.seed
        self.rng_sample = substream(seed, "sample", pid)
        self.rng_select = substream(seed, "select", pid)
        self._rng_delay = substream(seed, "delay", pid)
        self._timer_gen: dict = {}
        self.others = [q for q in range(world.config.n) if q != pid]

    @property
    def now(self) -> float:
        return self.world.sched.now

    @property
    def registry(self):
        return self.world.registry

    @property
    def recorder(self):
        return self.world.recorder

    def _delay(self) -> float:
        return self._rng_delay.expovariate(self.world.config.lam)

    def _dropped(self) -> bool:
        dr = self.world.config.drop_rate
        return dr > 0.0 and self._rng_delay.random() < dr

    def send(self, to: int, kind: int, data) -> None:
        world = self.world
        if self.pid in world.corrupted:
            delay = world.adversary.send_delay(self.pid, to, kind, data)
            world.sched.push(delay, to, kind, data, lane=LANE_ADV)
            return
        if self._dropped():
            return
        world.sched.push(self._delay(), to, kind, data)

    def gossip(self, kind: int, data, targets=None) -> None:
        if targets is None:
            targets = self.others
        for to in targets:
            self.send(to, kind, data)

    def sample(self, k: int) -> list:
        return sample_by_stake(self.others, k, self.rng_sample,
                               self.world.config.stake)

    def start_timer(self, key, duration: float) -> None:
        gen = self._timer_gen.get(key, 0) + 1
        self._timer_gen[key] = gen
        self.world.sched.push(duration, self.pid, K_TIMER, (key, gen))

    def stop_timer(self, key) -> None:
        # stale generations are ignored when they fire; stopping is idempotent
        if key in self._timer_gen:
            self._timer_gen[key] += 1

    def timer_live(self, key, gen: int) -> bool:
        return self._timer_gen.get(key) == gen


class World:
    """Parties plus the event loop; deterministic given (config, seed)."""

    def __init__(self, config: NetworkConfig, seed: int, registry=None, recorder=None):
        config.validate()
        self.config = config
        self.seed = seed
        self.registry = registry
        self.recorder = recorder
        self.sched = Scheduler()
        self.parties: list = [None] * config.n
        self.ctxs: list = [Ctx(self, pid) for pid in range(config.n)]
        self.corrupted: set[int] = set()
        self.adversary = None
        self.adv_watch: set[int] = set()
        self.stop = False
        self.events_processed = 0

    def add_party(self, pid: int, party) -> None:
        self.parties[pid] = party

    def set_adversary(self, adversary, corrupted, watch=()) -> None:
        self.adversary = adversary
        self.corrupted = set(corrupted)
        self.adv_watch = set(watch)

    def start(self) -> None:
        for pid in range(self.config.n):
            self.parties[pid].start(self.ctxs[pid])
        if self.adversary is not None:
            self.adversary.on_start(self)

    def run(self, horizon: float | None = None) -> "World":
        heap = self.sched.heap
        pop = heapq.heappop
        parties = self.parties
        ctxs = self.ctxs
        sched = self.sched
        adv = self.adversary
        watch = self.adv_watch
        n_done = 0
        while heap:
            ev = pop(heap)
            t = ev[0]
            if horizon is not None and t >= horizon:
                sched.now = horizon
                break
            sched.now = t
            dest = ev[3]
            n_done += 1
            if dest >= 0:
                parties[dest].handle(ev[4], ev[5], ctxs[dest])
                if watch and dest in watch:
                    adv.on_victim_event(self, dest)
            else:
                adv.on_step(self, ev[5])
            if self.stop:
                break
        self.events_processed += n_done
        return self
