"""Drop-in replacements for the vote pipeline: Glacier and the deployed variant.

Glacier keeps the base protocol except on negative votes: each vote carries
the list of ancestors the voter saw as non-preferred, and a failed poll only
resets the conflict sets reported non-preferred by more than ``k - alpha``
voters; sets reported by fewer voters get their counter bumped instead.
Ancestors nobody reported are left untouched, so an attacker who makes a poll
fail cannot reset a transaction that is preferred everywhere.

The deployed variant replaces binary votes entirely: queried parties reply
with their whole virtuous frontier, and the querier credits every queried
transaction acknowledged (as frontier member or ancestor of one) by at least
``alpha`` voters, resetting the rest.  A crafted transaction therefore cannot
influence what honest voters report.
"""

from __future__ import annotations

from .party import AvalancheParty, Poll
from .simnet import K_FETCH, K_VOTE


class GlacierParty(AvalancheParty):
    """Base protocol with per-ancestor blame on failed polls."""

    def make_poll(self, waiting: set) -> Poll:
        poll = Poll(waiting)
        poll.extra = {}     # reported-non-preferred counts, per ancestor
        return poll

    def send_vote(self, tid: int, frm: int, ctx) -> None:
        if self.vote_override is not None:
            w = self.vote_override(self.pid, tid, frm)
            if w is None:
                w = self.dag.strongly_preferred(tid)
        else:
            w = self.dag.strongly_preferred(tid)
        blamed = tuple(self.dag.non_preferred_ancestors(tid))
        ctx.send(frm, K_VOTE, (tid, self.pid, w, blamed))

    def on_vote(self, data, ctx) -> None:
        tid, voter, w, blamed = data
        poll = self.polls.get(tid)
        if poll is None or voter not in poll.waiting:
            return
        poll.waiting.discard(voter)
        if w:
            poll.n_true += 1
        else:
            poll.n_false += 1
        nonpref = poll.extra
        for t in blamed:
            nonpref[t] = nonpref.get(t, 0) + 1
        self.check_completion(tid, poll, ctx)

    def check_completion(self, tid: int, poll: Poll, ctx) -> None:
        p = self.params
        if poll.n_true >= p.alpha:
            self.complete_success(tid, ctx)
        elif not poll.waiting and poll.n_false > p.k - p.alpha:
            # a failure verdict waits for all k votes; lost votes time out
            self.complete_failure(tid, poll, ctx)

    def complete_failure(self, tid: int, poll: Poll, ctx) -> None:
        self._finish_poll(tid, ctx)
        threshold = self.params.k - self.params.alpha
        resets = []
        for t in sorted(poll.extra):
            if poll.extra[t] > threshold:
                if self.dag.reset_counter(t):
                    resets.append(t)
            else:
                self.dag.bump_counter(t)
        ctx.recorder.emit(ctx.now, "pollFail", self.pid, (tid, tuple(resets)))
        self.drive(ctx)


class ImplementedParty(AvalancheParty):
    """Deployed behavior: votes carry the voter's whole virtuous frontier."""

    def make_poll(self, waiting: set) -> Poll:
        poll = Poll(waiting)
        poll.extra = {}      # acknowledgement counts over live transactions
        poll.pending = []    # (voter, frontier) awaiting ancestry fetch
        return poll

    def on_query(self, tid: int, frm: int, ctx) -> None:
        # reply immediately with the local frontier; learn the transaction
        # in the background if it is new
        if not self.dag.knows(tid):
            self._learn(tid, frm, ctx)
        self.send_vote(tid, frm, ctx)
        self.drive(ctx)

    def send_vote(self, tid: int, frm: int, ctx) -> None:
        frontier = tuple(sorted(self.dag.virtuous_frontier()))
        if self.vote_override is not None:
            rigged = self.vote_override(self.pid, tid, frm)
            if rigged is not None:
                frontier = tuple(rigged)
        ctx.send(frm, K_VOTE, (tid, self.pid, frontier))

    def on_vote(self, data, ctx) -> None:
        tid, voter, frontier = data
        poll = self.polls.get(tid)
        if poll is None or voter not in poll.waiting:
            return
        poll.waiting.discard(voter)
        unknown = {x for x in frontier if not self.dag.knows(x)}
        if unknown:
            poll.pending.append((voter, frontier))
            missing = sorted(unknown - set(self.fetching) - set(self.parked))
            if missing:
                for m in missing:
                    self.fetching[m] = voter
                ctx.send(voter, K_FETCH, (tuple(missing), self.pid))
        else:
            self._credit_frontier(poll, frontier)
        self._check_impl_completion(tid, poll, ctx)

    def _credit_frontier(self, poll: Poll, frontier: tuple) -> None:
        """Count one acknowledgement per live transaction in the frontier's
        ancestor closure (members included)."""
        dag = self.dag
        dag._visit_epoch += 1
        stamp = dag._visit_epoch
        visit = dag._visit
        txs = self.registry.txs
        ack = poll.extra
        stack = [x for x in frontier if dag.knows(x)]
        while stack:
            j = stack.pop()
            if visit[j] == stamp:
                continue
            visit[j] = stamp
            if dag._closed[j]:
                continue        # frozen region; acknowledgements are moot there
            ack[j] = ack.get(j, 0) + 1
            stack.extend(txs[j].parents)

    def _on_inserted(self, tids, ctx) -> None:
        super()._on_inserted(tids, ctx)
        for tid in sorted(self.polls):
            poll = self.polls.get(tid)
            if poll is None or not poll.pending:
                continue
            still = []
            for voter, frontier in poll.pending:
                if all(self.dag.knows(x) for x in frontier):
                    self._credit_frontier(poll, frontier)
                else:
                    still.append((voter, frontier))
            poll.pending = still
            self._check_impl_completion(tid, poll, ctx)

    def check_completion(self, tid: int, poll: Poll, ctx) -> None:
        self._check_impl_completion(tid, poll, ctx)

    def _check_impl_completion(self, tid: int, poll: Poll, ctx) -> None:
        if tid not in self.polls:
            return
        if poll.waiting or poll.pending:
            return
        self._finish_poll(tid, ctx)
        dag = self.dag
        alpha = self.params.alpha
        ack = poll.extra
        resets = []
        for j in sorted(self.open_queried):
            if ack.get(j, 0) >= alpha:
                dag.apply_single_success(j)
            elif dag.reset_counter(j):
                resets.append(j)
        ctx.recorder.emit(ctx.now, "pollComplete", self.pid, (tid, tuple(resets)))
        self.drive(ctx)


PARTY_CLASSES = {
    "avalanche": AvalancheParty,
    "glacier": GlacierParty,
    "implemented": ImplementedParty,
}


def paired_counter_runs(seed: int, polls: int = 120, k: int = 20, alpha: int = 15,
                        beta1: int = 15, beta2: int = 150):
    """Drive base-protocol and blame-carrying bookkeeping with one schedule.

    Two views of the same DAG consume identical poll schedules and identical
    per-voter replies (each voter holds a seeded preference per conflict set);
    after every completed poll the per-transaction set counters of both are
    recorded.  Returns (history, tx_ids) where history[i] is a pair of
    counter maps after poll i.
    """
    import random as _random

    from .dag import Dag, TxRegistry

    rng = _random.Random(seed)
    reg = TxRegistry()
    base = Dag(reg, beta1, beta2)
    blame = Dag(reg, beta1, beta2)

    def add(inputs, parents):
        p = reg.new_payload(inputs, ((1, 1), (1, 1)))
        tx = reg.new_tx(p, parents)
        base.insert(tx)
        blame.insert(tx)
        return tx.tid

    ids = [add([(900, 0)], ())]
    n_inputs = 1
    for i in range(14):
        parents = rng.sample(ids, min(len(ids), rng.randint(1, 3)))
        if rng.random() < 0.3:
            inp = [(900 + rng.randrange(n_inputs), 0)]   # conflict with someone
        else:
            n_inputs += 1
            inp = [(900 + n_inputs - 1, 0)]
        ids.append(add(inp, parents))

    # per-voter preference inside each conflict set, fixed per run
    voters = list(range(k))
    prefers: dict[tuple[int, int], int] = {}

    def voter_prefers(v, tid):
        cs = sorted(base.conflict_set(tid))
        if len(cs) == 1:
            return True
        key = (v, min(cs))
        if key not in prefers:
            prefers[key] = cs[rng.randrange(len(cs))]
        return prefers[key] == tid

    history = []
    for _ in range(polls):
        x = ids[rng.randrange(len(ids))]
        ancs = sorted(base.ancestors(x))
        blames = []
        n_true = 0
        for v in voters:
            bad = tuple(a for a in ancs if not voter_prefers(v, a))
            ok = not bad and voter_prefers(v, x)
            if ok:
                n_true += 1
            blames.append(bad)
        if n_true >= alpha:
            base.apply_success(x)
            blame.apply_success(x)
        else:
            base.apply_failure(x)
            counts: dict[int, int] = {}
            for bad in blames:
                for a in bad:
                    counts[a] = counts.get(a, 0) + 1
            for a in sorted(counts):
                if counts[a] > k - alpha:
                    blame.reset_counter(a)
                else:
                    blame.bump_counter(a)
        history.append((
            {t: base.class_cnt(t) for t in ids},
            {t: blame.class_cnt(t) for t in ids},
        ))
    return history, ids
