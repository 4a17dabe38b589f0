"""Scenario configuration, world building, and the seeded runner.

A scenario fixes the protocol, its parameters, the network, the workload, an
optional adversary, a horizon, and a seed; a run is then fully deterministic.
The genesis transaction seeds the spendable-output set: one slot per workload
payload, a reserve for adversary payloads, and every party bootstraps with it
already accepted and delivered.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

from . import checkers
from .adversary import BivalentSplit, DelayAttack, GossipAttack, SnowballSplit
from .dag import TxRegistry
from .party import ProtocolParams
from .simnet import K_SUBMIT, NetworkConfig, World, substream
from .snowball import SnowballParty
from .trace import (
    LEVEL_FULL,
    LEVEL_METRICS,
    LEVEL_PROTO,
    Recorder,
    SCHEMA_VERSION,
    dump_jsonl,
    payload_table,
    write_summary_csv,
)
from .variants import PARTY_CLASSES

PROTOCOLS = ("avalanche", "glacier", "implemented", "snowball")
ADVERSARIES = ("none", "delay-attack", "gossip-attack", "bivalent-split")
TRACE_LEVELS = {"metrics": LEVEL_METRICS, "proto": LEVEL_PROTO, "full": LEVEL_FULL}
ADV_OUTPUT_BUDGET = {
    "none": 0, "delay-attack": 2048, "gossip-attack": 8192, "bivalent-split": 8,
}

OUT_DIR_ENV = "SNOWLAB_OUT_DIR"


@dataclass
class WorkloadConfig:
    count: int = 10
    rate: float = 5.0
    chain_fraction: float = 0.0
    start: float = 0.25
    target_index: int | None = None

    def validate(self) -> None:
        if self.count < 0:
            raise ValueError("workload.count: must be non-negative")
        if self.rate <= 0:
            raise ValueError("workload.rate: must be positive")
        if not (0.0 <= self.chain_fraction <= 1.0):
            raise ValueError("workload.chain_fraction: must be in [0, 1]")
        if self.target_index is not None and not (0 <= self.target_index < self.count):
            raise ValueError("workload.target_index: outside the workload")


@dataclass
class ScenarioConfig:
    protocol: str = "avalanche"
    params: ProtocolParams = field(default_factory=ProtocolParams)
    network: NetworkConfig = field(default_factory=lambda: NetworkConfig(n=50, f=0))
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    adversary: str = "none"
    gamma: float = 0.0
    split: float = 0.5
    victim: int | None = None
    victim_poll_limit: int | None = None
    horizon: float = 60.0
    seed: int = 0
    trace_level: str = "proto"
    stop_when_done: bool = True

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol: unknown {self.protocol!r}")
        if self.adversary not in ADVERSARIES:
            raise ValueError(f"adversary: unknown {self.adversary!r}")
        if self.trace_level not in TRACE_LEVELS:
            raise ValueError(f"trace_level: unknown {self.trace_level!r}")
        self.network.validate()
        self.params.validate(self.network.n)
        self.workload.validate()
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma: must be in [0, 1)")
        if not (0.0 <= self.split <= 1.0):
            raise ValueError("split: must be in [0, 1]")
        if self.horizon < 0:
            raise ValueError("horizon: must be non-negative")
        if self.adversary != "none" and self.network.f < 1:
            raise ValueError("network.f: adversary scenarios need corrupted parties")
        if (self.adversary in ("delay-attack", "gossip-attack")
                and self.workload.target_index is None):
            raise ValueError("workload.target_index: this adversary needs a target")
        if self.victim is not None and not (0 <= self.victim < self.network.n):
            raise ValueError("victim: outside the party set")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {
            "protocol", "params", "network", "workload", "adversary", "gamma",
            "split", "victim", "victim_poll_limit", "horizon", "seed",
            "trace_level", "stop_when_done",
        }
        for key in d:
            if key not in known:
                raise ValueError(f"config: unknown field {key!r}")
        kw = dict(d)
        if "params" in kw:
            kw["params"] = ProtocolParams(**kw["params"])
        if "network" in kw:
            kw["network"] = NetworkConfig(**kw["network"])
        if "workload" in kw:
            kw["workload"] = WorkloadConfig(**kw["workload"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class Metrics:
    """Aggregates trace events into counters and drives stop conditions."""

    def __init__(self, config: ScenarioConfig, world: World, honest: list[int],
                 expected: list[int], target_pid: int | None, victim: int | None,
                 chained: dict[int, tuple[int, object]]):
        self.config = config
        self.world = world
        self.honest = honest
        self.honest_set = set(honest)
        self.expected = set(expected)
        self.target_pid = target_pid
        self.victim = victim
        self.chained = chained          # parent pid -> (submitter, child payload)
        self.deliveries: dict[int, dict[int, float]] = {}
        self.delivery_details: dict[tuple[int, int], tuple] = {}
        self.broadcast_t: dict[int, float] = {}
        self.completed: dict[int, int] = {}
        self.completed_real: dict[int, int] = {}
        self.decided: dict[int, int] = {}
        self.target_bcast_t: float | None = None
        self.at_target: dict[int, int] | None = None        # total-poll snapshot
        self.real_at_target: dict[int, int] | None = None   # payload-poll snapshot
        self.target_delivery_polls_map: dict[int, tuple[int, int]] = {}
        self.target_resets: dict[int, int] = {}
        self.target_tids: set[int] = set()
        self.done = False

    # hot path: one dict dispatch per protocol-level event
    def hook(self, t, kind, party, fields) -> None:
        if kind in ("pollSuccess", "pollFail", "pollComplete", "pollTimeout"):
            self.completed[party] = self.completed.get(party, 0) + 1
            tx = fields[0]
            if self.world.registry[tx].payload is not None:
                self.completed_real[party] = self.completed_real.get(party, 0) + 1
            if kind in ("pollFail", "pollComplete") and self.target_tids:
                resets = fields[1]
                for r in resets:
                    if r in self.target_tids:
                        self.target_resets[party] = self.target_resets.get(party, 0) + 1
            if self.victim is not None and party == self.victim:
                self._check_victim_limit()
        elif kind == "deliver":
            pid = fields[0]
            self.deliveries.setdefault(pid, {})[party] = t
            self.delivery_details[(pid, party)] = (t, fields[2], fields[3])
            if pid == self.target_pid and self.at_target is not None:
                self.target_delivery_polls_map[party] = (
                    self.completed.get(party, 0) - self.at_target.get(party, 0),
                    self.completed_real.get(party, 0)
                    - self.real_at_target.get(party, 0),
                )
            link = self.chained.get(pid)
            if link is not None and link[0] == party:
                submitter, child = link
                self.world.sched.push(0.05, submitter, K_SUBMIT, child)
            self._check_done()
        elif kind == "broadcast":
            pid = fields[0]
            if pid not in self.broadcast_t:
                self.broadcast_t[pid] = t
            if pid == self.target_pid:
                self.target_tids.add(fields[1])
                if self.target_bcast_t is None:
                    self.target_bcast_t = t
                    self.at_target = dict(self.completed)
                    self.real_at_target = dict(self.completed_real)
        elif kind == "decide":
            self.decided[party] = self.decided.get(party, 0) + 1
            self._check_done()

    def victim_polls_since_target(self) -> int | None:
        """Total polls the victim completed since the target appeared."""
        if self.victim is None or self.at_target is None:
            return None
        return (self.completed.get(self.victim, 0)
                - self.at_target.get(self.victim, 0))

    def delivered_everywhere(self, pid: int) -> bool:
        got = self.deliveries.get(pid)
        return got is not None and self.honest_set <= set(got)

    def target_delivery_polls(self, party: int) -> tuple[int, int] | None:
        """(total, payload-only) polls the party completed between the
        target's broadcast and its delivery there; None when not delivered."""
        return self.target_delivery_polls_map.get(party)

    def _check_victim_limit(self) -> None:
        lim = self.config.victim_poll_limit
        if lim is None or self.done:
            return
        since = self.victim_polls_since_target()
        if since is not None and since >= lim:
            self.done = True
            self.world.stop = True

    def _check_done(self) -> None:
        if self.done or not self.config.stop_when_done:
            return
        if self.config.protocol == "snowball":
            if all(p in self.decided for p in self.honest):
                self.done = True
                self.world.stop = True
            return
        if self.target_pid is not None:
            if self.delivered_everywhere(self.target_pid):
                self.done = True
                self.world.stop = True
            return
        if self.expected and all(self.delivered_everywhere(p) for p in self.expected):
            self.done = True
            self.world.stop = True


@dataclass
class RunResult:
    config: ScenarioConfig
    world: World
    metrics: Metrics
    records: list
    header: dict
    verdicts: list
    ok: bool


def build_world(config: ScenarioConfig):
    config.validate()
    registry = TxRegistry()
    net = config.network
    n = net.n
    corrupted: set[int] = set()
    if config.adversary != "none":
        corrupted = set(range(n - net.f, n))
    honest = [p for p in range(n) if p not in corrupted]

    wl = config.workload
    adv_budget = ADV_OUTPUT_BUDGET[config.adversary]
    n_slots = wl.count + adv_budget + 8
    genesis_payload = registry.new_payload(
        [], tuple((0, 1) for _ in range(n_slots))
    )
    genesis_tx = registry.new_tx(genesis_payload, ())

    recorder = Recorder(TRACE_LEVELS[config.trace_level])
    world = World(net, config.seed, registry, recorder)

    if config.protocol == "snowball":
        for pid in range(n):
            world.add_party(pid, SnowballParty(
                pid, config.params.k, config.params.alpha, config.params.beta1))
    else:
        cls = PARTY_CLASSES[config.protocol]
        for pid in range(n):
            world.add_party(pid, cls(pid, config.params, registry, genesis_tx))

    # workload: payloads pre-created so ids are stable; independent ones
    # arrive on a Poisson clock, chained ones follow their parent's delivery
    rng = substream(config.seed, "workload")
    chained: dict[int, tuple[int, object]] = {}
    expected: list[int] = []
    target_pid = None
    victim = config.victim
    if config.protocol == "snowball":
        ones = math.ceil(len(honest) * config.split)
        for i, pid in enumerate(honest):
            value = 1 if i < ones else 0
            world.sched.push_at(0.0, 1, pid, K_SUBMIT, value)
    else:
        t = wl.start
        payloads = []
        chain_parent: dict[int, int] = {}
        used_parents: set[int] = set()
        for i in range(wl.count):
            if i > 0 and rng.random() < wl.chain_fraction:
                free = [p for p in range(i) if p not in used_parents]
                if free:
                    parent = free[rng.randrange(len(free))]
                    used_parents.add(parent)
                    chain_parent[i] = parent
        for i in range(wl.count):
            if i in chain_parent:
                parent_payload = payloads[chain_parent[i]]
                p = registry.new_payload(
                    [(parent_payload.pid, 1)], ((1, 1), (1, 1)))
            else:
                p = registry.new_payload(
                    [(genesis_payload.pid, i)], ((1, 1), (1, 1)))
            payloads.append(p)
            expected.append(p.pid)
        for i, p in enumerate(payloads):
            submitter = honest[i % len(honest)]
            if i in chain_parent:
                chained[payloads[chain_parent[i]].pid] = (submitter, p)
            else:
                world.sched.push_at(t, 1, submitter, K_SUBMIT, p)
                t += rng.expovariate(wl.rate)
        if wl.target_index is not None:
            target_pid = payloads[wl.target_index].pid
            t_submitter = honest[wl.target_index % len(honest)]
            if victim is None:
                victim = next(p for p in honest if p != t_submitter)

    metrics = Metrics(config, world, honest, expected, target_pid, victim, chained)
    recorder.hooks.append(metrics.hook)

    adv_slots = list(range(wl.count, wl.count + adv_budget))
    adversary = None
    watch = ()
    if config.adversary == "delay-attack":
        adv_pid = max(corrupted)
        adversary = DelayAttack(adv_pid, victim, target_pid, adv_slots,
                                genesis_payload.pid)
        watch = {victim}
    elif config.adversary == "gossip-attack":
        adv_pid = max(corrupted)
        adversary = GossipAttack(adv_pid, victim, target_pid, adv_slots,
                                 genesis_payload.pid, config.gamma)
    elif config.adversary == "bivalent-split":
        half = len(honest) // 2
        part1, part2 = set(honest[:half]), set(honest[half:])
        if config.protocol == "snowball":
            adversary = SnowballSplit(sorted(corrupted), part1)
        else:
            adversary = BivalentSplit(sorted(corrupted), part1, part2,
                                      adv_slots, genesis_payload.pid)
    if adversary is not None:
        world.set_adversary(adversary, corrupted, watch)

    return world, metrics


def run_scenario(config: ScenarioConfig, out_dir=None) -> RunResult:
    world, metrics = build_world(config)
    world.start()
    world.run(horizon=config.horizon)

    recorder = world.recorder
    header = {
        "schema": SCHEMA_VERSION,
        "config": config.to_dict(),
        "payloads": payload_table(world.registry),
        "genesis": 0,
        "honest": metrics.honest,
    }
    verdicts = compute_verdicts(config, header, recorder.records, metrics.honest)
    ok = checkers.hard_safety_ok(verdicts)

    if out_dir is None:
        out_dir = os.environ.get(OUT_DIR_ENV)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        dump_jsonl(os.path.join(out_dir, "run.jsonl"), header, recorder.records)
        write_summary_csv(os.path.join(out_dir, "summary.csv"), recorder.records)
        with open(os.path.join(out_dir, "verdicts.json"), "w") as fh:
            json.dump([vars(v) for v in verdicts], fh, indent=2, default=list)
            fh.write("\n")
    return RunResult(config, world, metrics, recorder.records, header, verdicts, ok)


def compute_verdicts(config_or_header, header, records, honest):
    config = config_or_header
    if isinstance(config, dict):
        protocol = config["protocol"]
        beta1 = config["params"]["beta1"]
        beta2 = config["params"]["beta2"]
        horizon = config["horizon"]
    else:
        protocol = config.protocol
        beta1 = config.params.beta1
        beta2 = config.params.beta2
        horizon = config.horizon
    if not records:
        return []
    if protocol == "snowball":
        return checkers.check_consensus(records, set(honest), horizon)
    verdicts = checkers.check_generic_broadcast(
        records, header["payloads"], set(honest), header.get("genesis", 0), horizon)
    verdicts.append(checkers.check_counter_thresholds(records, beta1, beta2))
    return verdicts
