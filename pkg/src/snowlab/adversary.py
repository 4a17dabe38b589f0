"""Attack strategies for the simulated network.

The targeted delay attack prepares a double spend (first T1, then T2, so T1
stays preferred everywhere), then watches the victim's acceptance counter for
a chosen target transaction.  Whenever the counter reaches half the early
acceptance threshold, the attacker hands the victim one fresh, well-formed
transaction whose ancestry contains T2 and every known wrapper of the target
payload; the victim polls it, honest voters refuse it because of T2, and the
failed poll zeroes the target's counter (the follow-up no-op lifts it back to
one).  The gossip attack drops the counter oracle and instead keeps a chosen
fraction of every party's unqueried pool malicious.  The split strategies make
corrupted parties answer each side of a partition with its own favourite.
"""

from __future__ import annotations

import math

from .simnet import K_ADV_STEP, K_HEAR


class AdversaryBase:
    def on_start(self, world) -> None:
        pass

    def on_step(self, world, tag) -> None:
        pass

    def on_victim_event(self, world, pid) -> None:
        pass

    def send_delay(self, frm, to, kind, data) -> float:
        return 0.0


class DelayAttack(AdversaryBase):
    """Counter-reset attack on one victim's acceptance of one target payload."""

    def __init__(self, adv_pid: int, victim: int, target_pid: int,
                 adv_outputs, genesis_pid: int, counter_oracle: bool = True,
                 poll_estimate_interval: float = 0.5):
        self.adv_pid = adv_pid
        self.victim = victim
        self.target_pid = target_pid
        self.outputs = list(adv_outputs)
        self.genesis_pid = genesis_pid
        self.counter_oracle = counter_oracle
        self.poll_estimate_interval = poll_estimate_interval
        self.t1 = None
        self.t2 = None
        self.wrappers: set[int] = set()     # every seen wrapper of the target payload
        self.injected: list[int] = []
        self.injections = 0
        self._est_polls_seen = 0

    def _spend_fresh(self, world):
        slot = self.outputs.pop()
        return world.registry.new_payload(
            [(self.genesis_pid, slot)], ((self.adv_pid, 1),)
        )

    def on_start(self, world) -> None:
        reg = world.registry
        me = world.parties[self.adv_pid]
        me.hear_hook = self._on_adv_hear
        self._world = world
        slot = self.outputs.pop()
        p1 = reg.new_payload([(self.genesis_pid, slot)], ((self.adv_pid, 1),))
        p2 = reg.new_payload([(self.genesis_pid, slot)], ((self.adv_pid, 2),))
        vf = sorted(me.dag.virtuous_frontier())
        self.t1 = reg.new_tx(p1, vf)
        self.t2 = reg.new_tx(p2, vf)
        ctx = world.ctxs[self.adv_pid]
        rec = world.recorder
        for tx in (self.t1, self.t2):
            me.dag.insert(tx)
            rec.emit(ctx.now, "broadcast", self.adv_pid, (tx.payload.pid, tx.tid))
        # T1 strictly before T2 everywhere, so T1 ends up preferred
        self._gossip_delays = {self.t1.tid: 0.0, self.t2.tid: 1e-4}
        ctx.gossip(K_HEAR, (self.t1.tid, self.adv_pid))
        ctx.gossip(K_HEAR, (self.t2.tid, self.adv_pid))
        self._gossip_delays = None
        if not self.counter_oracle:
            world.sched.push(self.poll_estimate_interval, -1, K_ADV_STEP, "estimate")

    def send_delay(self, frm, to, kind, data) -> float:
        delays = getattr(self, "_gossip_delays", None)
        if delays is not None and kind == K_HEAR:
            return delays.get(data[0], 0.0)
        return 0.0

    def _on_adv_hear(self, tid: int) -> None:
        tx = self._world.registry[tid]
        if tx.payload is not None and tx.payload.pid == self.target_pid:
            self.wrappers.add(tid)

    def _target_counter(self, world) -> int | None:
        victim = world.parties[self.victim]
        best = None
        for tid in self.wrappers:
            if victim.dag.knows(tid):
                c = victim.dag.class_cnt(tid)
                best = c if best is None or c > best else best
        return best

    def _outstanding(self, world) -> bool:
        if not self.injected:
            return False
        victim = world.parties[self.victim]
        last = self.injected[-1]
        if not victim.dag.knows(last):
            return True
        if last in victim.polls:
            return True
        return not victim.dag.is_queried(last)

    def on_victim_event(self, world, pid) -> None:
        if not self.counter_oracle or not self.wrappers or not self.outputs:
            return
        cnt = self._target_counter(world)
        if cnt is None:
            return
        victim = world.parties[self.victim]
        if any(victim.dag.knows(t) and victim.dag.is_accepted(t)
               for t in self.wrappers):
            return
        trigger = math.floor(victim.params.beta1 / 2)
        if cnt >= trigger and not self._outstanding(world):
            self._inject(world)

    def on_step(self, world, tag) -> None:
        # oracle-free mode: fall back to a timing heuristic, injecting on a
        # fixed cadence once the target is known
        if self.counter_oracle:
            return
        if self.wrappers and self.outputs and not self._outstanding(world):
            self._inject(world)
        world.sched.push(self.poll_estimate_interval, -1, K_ADV_STEP, "estimate")

    def _inject(self, world) -> None:
        me = world.parties[self.adv_pid]
        payload = self._spend_fresh(world)
        parents = sorted({self.t2.tid} | self.wrappers)
        if any(not me.dag.knows(p) for p in parents):
            return
        poison = world.registry.new_tx(payload, parents)
        me.dag.insert(poison)
        ctx = world.ctxs[self.adv_pid]
        world.recorder.emit(ctx.now, "broadcast", self.adv_pid,
                            (payload.pid, poison.tid))
        self.injected.append(poison.tid)
        self.injections += 1
        # a gossip the rest of the network never sees
        ctx.send(self.victim, K_HEAR, (poison.tid, self.adv_pid))


class GossipAttack(DelayAttack):
    """Keep a fraction gamma of every honest party's unqueried pool malicious."""

    def __init__(self, adv_pid, victim, target_pid, adv_outputs, genesis_pid,
                 gamma: float, step_interval: float = 0.05,
                 max_injections_per_step: int = 4):
        super().__init__(adv_pid, victim, target_pid, adv_outputs, genesis_pid)
        if not (0.0 <= gamma < 1.0):
            raise ValueError("gossip attack needs 0 <= gamma < 1")
        self.gamma = gamma
        self.step_interval = step_interval
        self.max_injections_per_step = max_injections_per_step
        self.malicious: set[int] = set()

    def on_start(self, world) -> None:
        super().on_start(world)
        world.sched.push(self.step_interval, -1, K_ADV_STEP, "replenish")

    def on_victim_event(self, world, pid) -> None:
        pass    # no counter oracle in this mode

    def _deficit(self, world) -> int:
        # injecting m into a pool of size s with b malicious already lifts
        # the fraction to (b+m)/(s+m); solve for the worst party
        worst = 0
        for pid in sorted(set(range(world.config.n)) - world.corrupted):
            pool = world.parties[pid].dag.unqueried
            if not pool:
                continue
            bad = sum(1 for t in pool if t in self.malicious)
            short = self.gamma * len(pool) - bad
            if short > 0:
                worst = max(worst, math.ceil(short / (1.0 - self.gamma)))
        return worst

    def on_step(self, world, tag) -> None:
        if self.gamma > 0 and self.wrappers and self.outputs:
            need = min(self._deficit(world), self.max_injections_per_step)
            for _ in range(need):
                if not self.outputs:
                    break
                self._inject_gossip(world)
        world.sched.push(self.step_interval, -1, K_ADV_STEP, "replenish")

    def _inject_gossip(self, world) -> None:
        me = world.parties[self.adv_pid]
        payload = self._spend_fresh(world)
        parents = sorted({self.t2.tid} | self.wrappers)
        if any(not me.dag.knows(p) for p in parents):
            return
        poison = world.registry.new_tx(payload, parents)
        me.dag.insert(poison)
        self.malicious.add(poison.tid)
        ctx = world.ctxs[self.adv_pid]
        world.recorder.emit(ctx.now, "broadcast", self.adv_pid,
                            (payload.pid, poison.tid))
        self.injections += 1
        ctx.gossip(K_HEAR, (poison.tid, self.adv_pid))


class BivalentSplit(AdversaryBase):
    """Sustain a two-sided preference split over one double spend.

    Corrupted parties answer queries from each partition as if that side's
    transaction were preferred; the double spend is seeded so each partition
    hears its own side first.
    """

    def __init__(self, adv_pids, part1, part2, adv_outputs, genesis_pid):
        self.adv_pids = sorted(adv_pids)
        self.part1 = set(part1)
        self.part2 = set(part2)
        self.outputs = list(adv_outputs)
        self.genesis_pid = genesis_pid
        self.t1 = None
        self.t2 = None

    def on_start(self, world) -> None:
        reg = world.registry
        leader = self.adv_pids[0]
        me = world.parties[leader]
        slot = self.outputs.pop()
        p1 = reg.new_payload([(self.genesis_pid, slot)], ((leader, 1),))
        p2 = reg.new_payload([(self.genesis_pid, slot)], ((leader, 2),))
        vf = sorted(me.dag.virtuous_frontier())
        self.t1 = reg.new_tx(p1, vf)
        self.t2 = reg.new_tx(p2, vf)
        ctx = world.ctxs[leader]
        for tx in (self.t1, self.t2):
            me.dag.insert(tx)
            world.recorder.emit(ctx.now, "broadcast", leader,
                                (tx.payload.pid, tx.tid))
        # each side hears its own favourite first
        self._order = {}
        for q in sorted(self.part1):
            self._order[(q, self.t1.tid)] = 0.0
            self._order[(q, self.t2.tid)] = 1e-4
        for q in sorted(self.part2):
            self._order[(q, self.t1.tid)] = 1e-4
            self._order[(q, self.t2.tid)] = 0.0
        ctx.gossip(K_HEAR, (self.t1.tid, leader))
        ctx.gossip(K_HEAR, (self.t2.tid, leader))
        self._order = None
        for pid in self.adv_pids:
            world.parties[pid].vote_override = self._rig_vote
        self._world = world

    def send_delay(self, frm, to, kind, data) -> float:
        order = getattr(self, "_order", None)
        if order:
            return order.get((to, data[0]), 0.0)
        return 0.0

    def _rig_vote(self, pid, tid, frm):
        """Answer as if the querier's side of the split were preferred."""
        me = self._world.parties[pid]
        if not me.dag.knows(tid):
            return None
        favoured = self.t1.tid if frm in self.part1 else self.t2.tid
        rejected = self.t2.tid if frm in self.part1 else self.t1.tid
        bad = me.dag.non_preferred_ancestors(tid)
        pair = {self.t1.tid, self.t2.tid}
        for b in bad:
            if b not in pair:
                return False
        if not me.dag.preferred(tid) and tid not in pair:
            return False
        if tid == rejected or rejected in me.dag.ancestors(tid):
            return False
        return True


class SnowballSplit(AdversaryBase):
    """Corrupted consensus parties reply 1 to one partition and 0 to the other."""

    def __init__(self, adv_pids, part1):
        self.adv_pids = sorted(adv_pids)
        self.part1 = set(part1)

    def on_start(self, world) -> None:
        for pid in self.adv_pids:
            world.parties[pid].reply_override = self._reply

    def _reply(self, pid, frm) -> int:
        return 1 if frm in self.part1 else 0
