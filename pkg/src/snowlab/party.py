"""Per-party state machine for the DAG polling protocol.

Each party is a deterministic reactor: the event loop hands it one event at a
time and the party mutates only its own state.  A party keeps up to
``max_poll`` queries in flight.  Every poll samples ``k`` parties by stake,
sends them the transaction, and counts votes: at least ``alpha`` positive
votes complete the poll successfully, more than ``k - alpha`` negative votes
fail it, and a timer expiry abandons it.

Poll selection prefers locally created no-op transactions, then any not yet
queried transaction, then a repollable one.  Starting a poll of T also creates
a no-op child of the rest of the virtuous frontier, so completed polls
propagate counter updates to parts of the DAG the polled transaction does not
reach; polls of no-ops themselves create none, which keeps the no-op chain
from feeding itself.

Transactions travel inside Query and Broadcast messages.  A transaction whose
ancestry is not fully known yet is parked and the missing pieces are fetched
from whoever mentioned it; a vote on it is deferred until the ancestry
resolves, which at worst costs the querier a timeout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dag import Dag, Ledger
from .simnet import (
    K_FETCH,
    K_FETCH_REPLY,
    K_HEAR,
    K_QUERY,
    K_SUBMIT,
    K_TIMER,
    K_VOTE,
)

FETCH_BATCH = 50


@dataclass
class ProtocolParams:
    k: int = 20
    alpha: int = 15
    beta1: int = 15
    beta2: int = 150
    max_poll: int = 4
    delta_query: float = 1.0
    max_parents: int = 5

    def validate(self, n: int | None = None) -> None:
        lo = math.ceil((self.k + 1) / 2)
        if not (lo <= self.alpha <= self.k):
            raise ValueError(
                f"params.alpha: must lie in [{lo}, {self.k}] for k={self.k}"
            )
        if self.beta1 < 1 or self.beta1 > self.beta2:
            raise ValueError("params.beta1: need 1 <= beta1 <= beta2")
        if self.max_poll < 1:
            raise ValueError("params.max_poll: must be positive")
        if self.delta_query <= 0:
            raise ValueError("params.delta_query: must be positive")
        if self.max_parents < 1:
            raise ValueError("params.max_parents: must be positive")
        if n is not None and self.k >= n:
            raise ValueError(f"params.k: must be below the party count {n}")


class Poll:
    __slots__ = ("waiting", "n_true", "n_false", "extra", "pending")

    def __init__(self, waiting: set):
        self.waiting = waiting
        self.n_true = 0
        self.n_false = 0
        self.extra = None
        self.pending = None


class AvalancheParty:
    """Honest party logic; variants override the vote pipeline pieces."""

    def __init__(self, pid: int, params: ProtocolParams, registry, genesis_tx):
        self.pid = pid
        self.params = params
        self.registry = registry
        self.dag = Dag(registry, params.beta1, params.beta2)
        self.ledger = Ledger()
        self.con_poll = 0
        self.polls: dict[int, Poll] = {}
        self.parked: dict[int, set[int]] = {}
        self.waiters: dict[int, list[int]] = {}
        self.deferred_votes: dict[int, list[int]] = {}
        self.fetching: dict[int, int] = {}      # missing id -> party asked
        self.open_queried: set[int] = set()
        self.polls_completed = 0
        self.polls_completed_real = 0
        # adversary instrumentation on corrupted parties; None means honest
        self.vote_override = None
        self.hear_hook = None
        self._bootstrap(genesis_tx)

    def _bootstrap(self, genesis_tx) -> None:
        self.dag.insert(genesis_tx)
        self.dag.mark_queried(genesis_tx.tid)
        self.dag.mark_accepted(genesis_tx.tid)
        self.ledger.deliver(genesis_tx.payload)

    # -- reactor ----------------------------------------------------------

    def start(self, ctx) -> None:
        self.drive(ctx)

    def handle(self, kind: int, data, ctx) -> None:
        if kind == K_VOTE:
            self.on_vote(data, ctx)
        elif kind == K_QUERY:
            self.on_query(data[0], data[1], ctx)
        elif kind == K_HEAR:
            self.on_hear(data[0], data[1], ctx)
        elif kind == K_TIMER:
            self.on_timeout(data[0], data[1], ctx)
        elif kind == K_FETCH:
            self.on_fetch(data[0], data[1], ctx)
        elif kind == K_FETCH_REPLY:
            self.on_fetch_reply(data[0], data[1], ctx)
        elif kind == K_SUBMIT:
            self.on_submit(data, ctx)
        else:
            raise ValueError(f"party {self.pid}: unknown event kind {kind}")

    # -- user submissions ---------------------------------------------------

    def on_submit(self, payload, ctx) -> None:
        if not self.ledger.is_valid(payload):
            return
        vf = sorted(self.dag.virtuous_frontier())
        if len(vf) > self.params.max_parents:
            vf = sorted(ctx.rng_select.sample(vf, self.params.max_parents))
        tx = self.registry.new_tx(payload, vf)
        self.dag.insert(tx)
        ctx.recorder.emit(ctx.now, "broadcast", self.pid, (payload.pid, tx.tid))
        ctx.gossip(K_HEAR, (tx.tid, self.pid))
        self.drive(ctx)

    # -- gossip and ancestry resolution --------------------------------------

    def on_hear(self, tid: int, origin: int, ctx) -> None:
        if self.dag.knows(tid) or tid in self.parked:
            return
        if self.hear_hook is not None:
            self.hear_hook(tid)
        if ctx.recorder.full:
            ctx.recorder.emit_full(ctx.now, "hear", self.pid, (tid, origin))
        self._learn(tid, origin, ctx)
        self.drive(ctx)

    def _learn(self, tid: int, source: int, ctx) -> bool:
        """Insert tid now, or park it and fetch missing ancestry from source."""
        tx = self.registry[tid]
        missing = self.dag.missing_parents(tx)
        if not missing:
            self.dag.insert(tx)
            self._on_inserted([tid], ctx)
            return True
        already = self.parked.get(tid)
        self.parked[tid] = set(missing)
        for m in missing:
            if already is None or m not in already:
                self.waiters.setdefault(m, []).append(tid)
        need = tuple(
            sorted(m for m in missing if m not in self.parked and m not in self.fetching)
        )
        if need:
            for m in need:
                self.fetching[m] = source
            ctx.send(source, K_FETCH, (need, self.pid))
        return False

    def _on_inserted(self, tids: list[int], ctx) -> None:
        """Cascade insertions of parked children and flush deferred votes."""
        queue = list(tids)
        while queue:
            done = queue.pop()
            for child in self.waiters.pop(done, ()):
                miss = self.parked.get(child)
                if miss is None:
                    continue
                miss.discard(done)
                if not miss:
                    del self.parked[child]
                    self.dag.insert(self.registry[child])
                    queue.append(child)
            for frm in self.deferred_votes.pop(done, ()):
                self.send_vote(done, frm, ctx)

    def on_fetch(self, ids: tuple, frm: int, ctx) -> None:
        # every known requested id is answered; the remaining budget carries
        # as much of their ancestry as fits (the requester re-asks for gaps)
        out = [j for j in sorted(ids) if self.dag.knows(j)]
        seen = set(out)
        stack = list(reversed(out))
        while stack and len(out) < FETCH_BATCH:
            j = stack.pop()
            for p in sorted(self.registry[j].parents, reverse=True):
                if p not in seen:
                    seen.add(p)
                    out.append(p)
                    stack.append(p)
        if out:
            ctx.send(frm, K_FETCH_REPLY, (tuple(out), self.pid))

    def on_fetch_reply(self, ids: tuple, frm: int, ctx) -> None:
        got = set(ids)
        for m in list(self.fetching):
            # requested ids this responder did not return become askable again
            if m in got or self.fetching[m] == frm:
                del self.fetching[m]
        inserted = []
        for tid in sorted(ids):
            if self.dag.knows(tid) or tid in self.parked:
                continue
            tx = self.registry[tid]
            missing = self.dag.missing_parents(tx)
            if missing:
                self.parked[tid] = set(missing)
                for m in missing:
                    self.waiters.setdefault(m, []).append(tid)
                need = tuple(sorted(
                    m for m in missing
                    if m not in self.parked and m not in self.fetching
                ))
                if need:
                    for m in need:
                        self.fetching[m] = frm
                    ctx.send(frm, K_FETCH, (need, self.pid))
            else:
                self.dag.insert(tx)
                inserted.append(tid)
        if inserted:
            self._on_inserted(inserted, ctx)
        self.drive(ctx)

    # -- query side -----------------------------------------------------------

    def on_query(self, tid: int, frm: int, ctx) -> None:
        if not self.dag.knows(tid) and not self._learn(tid, frm, ctx):
            self.deferred_votes.setdefault(tid, []).append(frm)
            return
        self.send_vote(tid, frm, ctx)
        self.drive(ctx)

    def send_vote(self, tid: int, frm: int, ctx) -> None:
        if self.vote_override is not None:
            w = self.vote_override(self.pid, tid, frm)
            if w is None:
                w = self.dag.strongly_preferred(tid)
        else:
            w = self.dag.strongly_preferred(tid)
        ctx.send(frm, K_VOTE, (tid, self.pid, w))

    # -- vote accounting --------------------------------------------------------

    def on_vote(self, data, ctx) -> None:
        tid, voter, w = data
        poll = self.polls.get(tid)
        if poll is None or voter not in poll.waiting:
            return
        poll.waiting.discard(voter)
        if w:
            poll.n_true += 1
        else:
            poll.n_false += 1
        self.check_completion(tid, poll, ctx)

    def check_completion(self, tid: int, poll: Poll, ctx) -> None:
        p = self.params
        if poll.n_true >= p.alpha:
            self.complete_success(tid, ctx)
        elif poll.n_false > p.k - p.alpha:
            self.complete_failure(tid, poll, ctx)

    def _finish_poll(self, tid: int, ctx, real_completion: bool = True) -> None:
        self.polls.pop(tid, None)
        ctx.stop_timer(tid)
        self.dag.in_flight.discard(tid)
        self.con_poll -= 1
        if real_completion:
            self.polls_completed += 1
            if self.registry[tid].payload is not None:
                self.polls_completed_real += 1

    def complete_success(self, tid: int, ctx) -> None:
        self._finish_poll(tid, ctx)
        self.dag.apply_success(tid)
        ctx.recorder.emit(ctx.now, "pollSuccess", self.pid, (tid,))
        self.drive(ctx)

    def complete_failure(self, tid: int, poll: Poll, ctx) -> None:
        self._finish_poll(tid, ctx)
        resets = self.dag.apply_failure(tid)
        ctx.recorder.emit(ctx.now, "pollFail", self.pid, (tid, tuple(resets)))
        self.drive(ctx)

    def on_timeout(self, tid: int, gen: int, ctx) -> None:
        if not ctx.timer_live(tid, gen):
            return
        if tid not in self.polls:
            return
        self._finish_poll(tid, ctx)
        # the transaction may be queried again later
        self.dag.unmark_queried(tid)
        self.open_queried.discard(tid)
        ctx.recorder.emit(ctx.now, "pollTimeout", self.pid, (tid,))
        self.drive(ctx)

    # -- poll initiation and delivery ---------------------------------------------

    def drive(self, ctx) -> None:
        while self.con_poll < self.params.max_poll:
            if not self._start_poll(ctx):
                break
        if self.dag.accept_candidates:
            self._try_deliver(ctx)

    def _start_poll(self, ctx) -> bool:
        dag = self.dag
        registry = self.registry
        if dag.noop_queue:
            tid = dag.noop_queue.popleft()
            cat = "noop"
            tx = registry[tid]
            dag.release_noop_key(tx.parents)
            dag.insert(tx)
        else:
            tid = dag.pick_unqueried(ctx.rng_select)
            if tid is not None:
                cat = "fresh"
                dag.reset_confidence(tid)
            else:
                tid = dag.pick_repollable(ctx.rng_select)
                if tid is None:
                    return False
                cat = "repoll"
        self.con_poll += 1
        sampled = ctx.sample(self.params.k)
        self.polls[tid] = self.make_poll(set(sampled))
        dag.mark_queried(tid)
        dag.in_flight.add(tid)
        if not dag.is_accepted(tid):
            self.open_queried.add(tid)
        for v in sorted(sampled):
            ctx.send(v, K_QUERY, (tid, self.pid))
        if cat != "noop":
            rest = dag.virtuous_frontier() - {tid}
            if rest:
                key = frozenset(rest)
                if dag.claim_noop_key(key):
                    noop = registry.new_tx(None, sorted(rest))
                    dag.noop_queue.append(noop.tid)
        ctx.start_timer(tid, self.params.delta_query)
        ctx.recorder.emit(ctx.now, "pollStart", self.pid, (tid, cat))
        return True

    def make_poll(self, waiting: set) -> Poll:
        return Poll(waiting)

    def _try_deliver(self, ctx) -> None:
        dag = self.dag
        registry = self.registry
        progressed = True
        while progressed:
            progressed = False
            for tid in sorted(dag.accept_candidates):
                if dag.class_cnt(tid) < self.params.beta1:
                    dag.accept_candidates.discard(tid)
                    continue
                if not dag.acceptable(tid):
                    continue
                tx = registry[tid]
                if tx.payload is None:
                    self._accept(tid)
                    progressed = True
                elif self.ledger.is_valid(tx.payload):
                    cnt = dag.class_cnt(tid)
                    cs = dag.conflict_set_size(tid)
                    self._accept(tid)
                    self.ledger.deliver(tx.payload)
                    ctx.recorder.emit(
                        ctx.now, "deliver", self.pid,
                        (tx.payload.pid, tid, cnt, cs),
                    )
                    progressed = True
                # an acceptable payload that fails validation stays pending

    def _accept(self, tid: int) -> None:
        self.dag.mark_accepted(tid)
        self.open_queried.discard(tid)
