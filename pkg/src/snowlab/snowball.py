"""Single-decision binary consensus by repeated sampling.

A party holds a value, polls ``k`` sampled parties each round, and adopts the
round's majority bookkeeping: confidence per value, and a counter of
consecutive rounds won by the party's own value.  The counter reaching
``beta`` decides.  Parties queried while undefined adopt the incoming value.

Two forms are provided: an event-driven party for the network simulator, and
a round-synchronous form that runs whole populations in lockstep, used where
sampling schedules must be injected or where many long runs would make the
event-driven form needlessly slow.
"""

from __future__ import annotations

from .simnet import K_SB_QUERY, K_SB_VOTE, K_SUBMIT, sample_by_stake, substream


class SnowballParty:
    def __init__(self, pid: int, k: int, alpha: int, beta: int):
        self.pid = pid
        self.k = k
        self.alpha = alpha
        self.beta = beta
        self.b = None
        self.d = {0: 0, 1: 0}
        self.cnt = 0
        self.votes = {0: 0, 1: 0}
        self.round = 0
        self.waiting: set[int] = set()
        self.new_round = False
        self.decided = False
        self.decided_value = None
        self.decide_count = 0
        self.proposed = False
        # adversary-controlled parties reply via this hook instead
        self.reply_override = None

    def start(self, ctx) -> None:
        pass

    def handle(self, kind: int, data, ctx) -> None:
        if kind == K_SB_VOTE:
            self.on_vote(data[0], data[1], data[2], ctx)
        elif kind == K_SB_QUERY:
            self.on_query(data[0], data[1], data[2], ctx)
        elif kind == K_SUBMIT:
            self.propose(data, ctx)
        else:
            raise ValueError(f"snowball party {self.pid}: unknown kind {kind}")

    def propose(self, b, ctx) -> None:
        if self.proposed:
            raise ValueError(f"party {self.pid} proposed twice")
        self.proposed = True
        self.decided = False
        if b is not None:
            self.b = b
        ctx.recorder.emit(ctx.now, "propose", self.pid, (b,))
        self.new_round = True
        self._maybe_round(ctx)

    def _maybe_round(self, ctx) -> None:
        if not self.new_round or self.decided or self.b is None:
            return
        self.new_round = False
        self.round += 1
        self.votes = {0: 0, 1: 0}
        sampled = ctx.sample(self.k)
        self.waiting = set(sampled)
        for v in sorted(sampled):
            ctx.send(v, K_SB_QUERY, (self.b, self.round, self.pid))

    def on_query(self, b_in, rnd, frm, ctx) -> None:
        if self.reply_override is not None:
            reply = self.reply_override(self.pid, frm)
        else:
            if self.b is None:
                self.b = b_in
            reply = self.b
        ctx.send(frm, K_SB_VOTE, (reply, rnd, self.pid))

    def on_vote(self, value, rnd, voter, ctx) -> None:
        if rnd != self.round or voter not in self.waiting:
            return
        self.waiting.discard(voter)
        self.votes[value] += 1
        if self.votes[value] >= self.alpha:
            self._round_won(value, ctx)
        elif not self.waiting:
            # all k replies are in and neither value reached the threshold
            self.cnt = 0
            self.new_round = True
            self._maybe_round(ctx)

    def _round_won(self, value, ctx) -> None:
        self.d[value] += 1
        if value == self.b:
            self.cnt += 1
        elif self.d[value] > self.d[self.b]:
            self.b = value
            self.cnt = 0
        self._decide_check(ctx)
        self.new_round = True
        self._maybe_round(ctx)

    def _decide_check(self, ctx) -> None:
        if self.cnt == self.beta and not self.decided:
            self.decided = True
            self.decided_value = self.b
            self.decide_count += 1
            ctx.recorder.emit(ctx.now, "decide", self.pid, (self.b, self.round))


class LockstepSnowball:
    """Round-synchronous population; all parties poll snapshot values.

    ``reply_for(voter, querier)`` injects adversary replies; honest voters
    report the value they held at the round boundary.
    """

    def __init__(self, n, k, alpha, beta, seed, reply_for=None, stake=None):
        self.n = n
        self.k = k
        self.alpha = alpha
        self.beta = beta
        self.rng = substream(seed, "lockstep")
        self.reply_for = reply_for
        self.stake = stake
        self.b = [None] * n
        self.d = [[0, 0] for _ in range(n)]
        self.cnt = [0] * n
        self.decided = [False] * n
        self.decided_value = [None] * n
        self.decided_round = [None] * n
        self.active = [True] * n
        self.rounds = 0

    def propose(self, values) -> None:
        for pid, v in enumerate(values):
            self.b[pid] = v
            self.active[pid] = v is not None

    def step(self) -> None:
        self.rounds += 1
        snapshot = list(self.b)
        others = [[q for q in range(self.n) if q != p] for p in range(self.n)]
        for p in range(self.n):
            if self.decided[p] or not self.active[p] or self.b[p] is None:
                continue
            sampled = sample_by_stake(others[p], self.k, self.rng, self.stake)
            tally = [0, 0]
            for v in sampled:
                if self.reply_for is not None:
                    r = self.reply_for(v, p)
                    if r is None:
                        r = snapshot[v]
                else:
                    r = snapshot[v]
                if r is not None:
                    tally[r] += 1
            won = None
            if tally[0] >= self.alpha:
                won = 0
            elif tally[1] >= self.alpha:
                won = 1
            if won is None:
                self.cnt[p] = 0
                continue
            self.d[p][won] += 1
            if won == self.b[p]:
                self.cnt[p] += 1
            elif self.d[p][won] > self.d[p][self.b[p]]:
                self.b[p] = won
                self.cnt[p] = 0
            if self.cnt[p] >= self.beta and not self.decided[p]:
                self.decided[p] = True
                self.decided_value[p] = self.b[p]
                self.decided_round[p] = self.rounds

    def run(self, max_rounds: int, stop_when_all_decided=True) -> int:
        for _ in range(max_rounds):
            if stop_when_all_decided and all(
                self.decided[p] or not self.active[p] for p in range(self.n)
            ):
                break
            self.step()
        return self.rounds
