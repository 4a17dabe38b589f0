"""Ledger data model: UTXO payloads, protocol transactions, and the per-party DAG.

A payload spends outputs of earlier payloads.  A protocol transaction wraps a
payload (or no payload at all, for no-op transactions) with references to
previously seen transactions, which makes the ledger a DAG.  Transactions that
spend a common output conflict; each party groups conflicting transactions
into conflict sets and tracks, per set, a preferred member, the most recently
preferred member, and a consecutive-success counter that drives acceptance.

Transactions are created once in a :class:`TxRegistry` shared by a whole
simulated world and identified by dense integer ids; parents always have
smaller ids than children, so ascending id order is a topological order.
Each party's :class:`Dag` is a view (membership flags plus bookkeeping) over
that registry.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field


class UnknownTransaction(KeyError):
    """Raised when an operation references an id the local view does not hold."""


class UnknownParent(ValueError):
    """Raised when inserting a transaction whose parents are not all known yet."""

    def __init__(self, tx_id: int, missing: list[int]):
        super().__init__(f"transaction {tx_id} has unknown parents {missing}")
        self.tx_id = tx_id
        self.missing = missing


@dataclass(frozen=True)
class Payload:
    """A user-level value transfer in the unspent-output model.

    ``inputs`` is a set of (payload id, output index) references to outputs of
    earlier payloads; ``outputs`` is an ordered list of (owner, amount) pairs.
    ``auth_valid`` stands in for every cryptographic requirement.
    """

    pid: int
    inputs: frozenset[tuple[int, int]]
    outputs: tuple[tuple[int, int], ...]
    auth_valid: bool = True

    def __post_init__(self):
        if not self.outputs:
            raise ValueError("payload needs at least one output")


@dataclass(frozen=True)
class Tx:
    """A protocol transaction: a payload (or None for a no-op) plus parent refs."""

    tid: int
    payload: Payload | None
    parents: tuple[int, ...]

    @property
    def is_noop(self) -> bool:
        return self.payload is None


def related(a: Payload, b: Payload) -> bool:
    """True iff one payload consumes an output created by the other."""
    if a.pid == b.pid:
        return False
    if any(ref[0] == b.pid for ref in a.inputs):
        return True
    return any(ref[0] == a.pid for ref in b.inputs)


def conflicts(a: Tx, b: Tx) -> bool:
    """True iff both carry real payloads whose input sets intersect."""
    if a.payload is None or b.payload is None:
        return False
    if a.tid == b.tid:
        return False
    return bool(a.payload.inputs & b.payload.inputs)


class TxRegistry:
    """World-wide store of immutable transactions, one entry per id."""

    def __init__(self):
        self.txs: list[Tx] = []
        self.payloads: dict[int, Payload] = {}
        self._next_pid = 0

    def new_payload(self, inputs, outputs, auth_valid=True, pid=None) -> Payload:
        if pid is None:
            pid = self._next_pid
        self._next_pid = max(self._next_pid, pid + 1)
        p = Payload(pid, frozenset(inputs), tuple(outputs), auth_valid)
        self.payloads[pid] = p
        return p

    def new_tx(self, payload: Payload | None, parents) -> Tx:
        parents = tuple(sorted(parents))
        tid = len(self.txs)
        if any(p >= tid or p < 0 for p in parents):
            raise ValueError("parents must be previously created transactions")
        tx = Tx(tid, payload, parents)
        self.txs.append(tx)
        return tx

    def __getitem__(self, tid: int) -> Tx:
        return self.txs[tid]

    def __len__(self) -> int:
        return len(self.txs)


class Ledger:
    """One party's delivered-payload view; the validity predicate lives here.

    A payload is valid when it is authenticated, every input refers to an
    existing output of a delivered payload, and no delivered payload already
    spends any of its inputs.
    """

    def __init__(self):
        self.delivered: dict[int, Payload] = {}
        self.order: list[int] = []
        self.spent: set[tuple[int, int]] = set()

    def is_valid(self, p: Payload) -> bool:
        if not p.auth_valid:
            return False
        for pid, idx in p.inputs:
            src = self.delivered.get(pid)
            if src is None or idx >= len(src.outputs):
                return False
        return not (p.inputs & self.spent)

    def deliver(self, p: Payload) -> None:
        if p.pid in self.delivered:
            raise ValueError(f"payload {p.pid} delivered twice")
        self.delivered[p.pid] = p
        self.order.append(p.pid)
        self.spent |= p.inputs


def validate_payload(p: Payload, ledger: Ledger) -> bool:
    return ledger.is_valid(p)


# Conflict-class sentinel: a transaction whose class slot holds SINGLETON is
# the only member of its conflict set, is its own preferred and most recently
# preferred member, and keeps its counter in Dag._cnt.
_SINGLETON = -1
_ABSENT = -2


class _ConflictClass:
    """Bookkeeping for a conflict set with more than one member."""

    __slots__ = ("members", "pref", "last", "cnt", "seq")

    def __init__(self, members, pref, last, cnt, seq):
        self.members = members
        self.pref = pref
        self.last = last
        self.cnt = cnt
        self.seq = seq


class Dag:
    """One party's transaction DAG with conflict and preference bookkeeping.

    Also owns the polling-related sets that live alongside the ledger state:
    the queried set, the queue of locally created no-op transactions, the
    repollable set, and the virtuous frontier (non-conflicting leaves whose
    ancestors are all preferred, the parent pool for fresh transactions).

    Accepted transactions are frozen: their confidence and counters stop
    changing, and once every ancestor of an accepted transaction is accepted
    too the node is treated as closed, letting ancestor walks stop early.
    Acceptance is monotone, so freezing never changes any later decision.
    """

    def __init__(self, registry: TxRegistry, beta1: int, beta2: int):
        self.registry = registry
        self.beta1 = beta1
        self.beta2 = beta2
        n = 0
        self._known = bytearray(n)
        self._accepted = bytearray(n)
        self._closed = bytearray(n)
        self._queried = bytearray(n)
        self._d: list[int] = []
        self._cnt: list[int] = []          # counter for singleton classes
        self._cls: list[int] = []          # _ABSENT / _SINGLETON / class index
        self._childcnt: list[int] = []
        self._estab: list[int] = []        # insertion order, breaks merge ties
        self._anc_ok: bytearray = bytearray(n)
        self._anc_epoch: list[int] = []
        self._visit: list[int] = []
        self._visit_epoch = 0
        self.classes: list[_ConflictClass] = []
        self.conflict_sets: dict[int, set[int]] = {}   # per-tx, only when >1 member
        self._spenders: dict[tuple[int, int], list[int]] = {}
        self.pref_epoch = 0
        self.known_ids: list[int] = []
        self._vf: set[int] = set()
        self._vf_stale = False
        # polling state
        self.unqueried: list[int] = []
        self._unq_pos: dict[int, int] = {}
        self.unaccepted: list[int] = []
        self._unacc_pos: dict[int, int] = {}
        self.in_flight: set[int] = set()
        self.noop_queue: deque[int] = deque()
        self._pending_noop_keys: set[frozenset] = set()
        self.repollable: set[int] = set()
        self.accept_candidates: set[int] = set()

    # -- storage growth -------------------------------------------------

    def _grow(self, tid: int) -> None:
        need = tid + 1 - len(self._cls)
        if need <= 0:
            return
        self._known.extend(b"\0" * need)
        self._accepted.extend(b"\0" * need)
        self._closed.extend(b"\0" * need)
        self._queried.extend(b"\0" * need)
        self._anc_ok.extend(b"\0" * need)
        self._d.extend([0] * need)
        self._cnt.extend([0] * need)
        self._cls.extend([_ABSENT] * need)
        self._childcnt.extend([0] * need)
        self._estab.extend([0] * need)
        self._anc_epoch.extend([-1] * need)
        self._visit.extend([-1] * need)

    # -- membership and lookup -------------------------------------------

    def knows(self, tid: int) -> bool:
        return tid < len(self._cls) and self._known[tid] != 0

    def _require(self, tid: int) -> Tx:
        if not self.knows(tid):
            raise UnknownTransaction(tid)
        return self.registry.txs[tid]

    def missing_parents(self, tx: Tx) -> list[int]:
        return [p for p in tx.parents if not self.knows(p)]

    # -- insertion (the updateDAG step) -----------------------------------

    def insert(self, tx: Tx) -> bool:
        """Add ``tx`` to the view, wiring conflicts and the frontier.

        Returns False when the transaction was already known.  Raises
        :class:`UnknownParent` when some parent has not been inserted, which
        signals a gossip gap the caller must fill before retrying.
        """
        tid = tx.tid
        self._grow(tid)
        if self._known[tid]:
            return False
        missing = self.missing_parents(tx)
        if missing:
            raise UnknownParent(tid, missing)
        self._known[tid] = 1
        self._estab[tid] = len(self.known_ids)
        self.known_ids.append(tid)
        for p in tx.parents:
            self._childcnt[p] += 1
            self._vf.discard(p)
        if tx.payload is None:
            self._cls[tid] = _SINGLETON
        else:
            rivals: list[int] = []
            for ref in tx.payload.inputs:
                lst = self._spenders.get(ref)
                if lst is None:
                    self._spenders[ref] = [tid]
                else:
                    for o in lst:
                        if o != tid:
                            rivals.append(o)
                    lst.append(tid)
            if not rivals:
                self._cls[tid] = _SINGLETON
            else:
                self._join_conflicts(tid, rivals)
        if tid not in self.conflict_sets and self._ancestry_ok(tid):
            self._vf.add(tid)
        self._enqueue_unqueried(tid)
        self._unacc_pos[tid] = len(self.unaccepted)
        self.unaccepted.append(tid)
        return True

    def _join_conflicts(self, tid: int, rivals: list[int]) -> None:
        rivals = sorted(set(rivals))
        cs = self.conflict_sets.setdefault(tid, {tid})
        for o in rivals:
            cs.add(o)
            ocs = self.conflict_sets.setdefault(o, {o})
            ocs.add(tid)
        # Merge bookkeeping entries for every conflict group the new
        # transaction touches.  The entry belonging to the member with
        # maximal confidence survives; ties keep the earliest-established
        # entry, so a newcomer never displaces a settled preference.
        entries: list[_ConflictClass] = []
        seen_groups: set[int] = set()
        singles: list[int] = []
        for o in rivals:
            g = self._cls[o]
            if g == _SINGLETON:
                singles.append(o)
            elif g not in seen_groups:
                seen_groups.add(g)
                entries.append(self.classes[g])
        # (max confidence, earliest establishment) picks the surviving entry
        best_key = (self._d[tid], -self._estab[tid])
        pref, last, cnt, seq = tid, tid, 0, self._estab[tid]
        for o in singles:
            key = (self._d[o], -self._estab[o])
            if key > best_key:
                best_key = key
                pref, last, cnt, seq = o, o, self._cnt[o], self._estab[o]
        for c in entries:
            key = (max(self._d[m] for m in c.members), -c.seq)
            if key > best_key:
                best_key = key
                pref, last, cnt, seq = c.pref, c.last, c.cnt, c.seq
        seq = min([seq] + [self._estab[o] for o in singles] + [c.seq for c in entries])
        members = [tid] + singles
        for c in entries:
            members.extend(c.members)
        demoted = any(
            m != pref
            and (self._cls[m] == _SINGLETON or self.classes[self._cls[m]].pref == m)
            for m in members
            if m != tid
        )
        cls = _ConflictClass(members, pref, last, cnt, seq)
        idx = len(self.classes)
        self.classes.append(cls)
        for g in seen_groups:
            self.classes[g] = None   # absorbed; indices must stay stable
        for m in members:
            self._cls[m] = idx
            self._vf.discard(m)      # conflicting members leave the frontier
        if demoted:
            self._bump_pref_epoch()

    def _bump_pref_epoch(self) -> None:
        self.pref_epoch += 1
        self._vf_stale = True

    # -- basic graph queries ----------------------------------------------

    def parents_of(self, tid: int) -> tuple[int, ...]:
        return self._require(tid).parents

    def ancestors(self, tid: int) -> set[int]:
        """Transitive closure over parent references (excluding ``tid``)."""
        self._require(tid)
        out: set[int] = set()
        stack = list(self.registry.txs[tid].parents)
        while stack:
            j = stack.pop()
            if j not in out:
                out.add(j)
                stack.extend(self.registry.txs[j].parents)
        return out

    def children_of(self, tid: int) -> set[int]:
        self._require(tid)
        return {j for j in self.known_ids if tid in self.registry.txs[j].parents}

    def descendants(self, tid: int) -> set[int]:
        """Transitive closure over child edges, by forward scan of the view."""
        self._require(tid)
        out: set[int] = set()
        for j in sorted(self.known_ids):
            if j <= tid:
                continue
            if any(p == tid or p in out for p in self.registry.txs[j].parents):
                out.add(j)
        return out

    # -- preference -------------------------------------------------------

    def conflict_set(self, tid: int) -> set[int]:
        self._require(tid)
        cs = self.conflict_sets.get(tid)
        return set(cs) if cs is not None else {tid}

    def live_classes(self) -> list[_ConflictClass]:
        return [c for c in self.classes if c is not None]

    def conflict_set_size(self, tid: int) -> int:
        cs = self.conflict_sets.get(tid)
        return len(cs) if cs is not None else 1

    def class_cnt(self, tid: int) -> int:
        g = self._cls[tid]
        if g == _SINGLETON:
            return self._cnt[tid]
        return self.classes[g].cnt

    def class_pref(self, tid: int) -> int:
        g = self._cls[tid]
        if g == _SINGLETON:
            return tid
        return self.classes[g].pref

    def confidence(self, tid: int) -> int:
        return self._d[tid]

    def is_accepted(self, tid: int) -> bool:
        return tid < len(self._accepted) and self._accepted[tid] != 0

    def preferred(self, tid: int) -> bool:
        self._require(tid)
        g = self._cls[tid]
        if g == _SINGLETON:
            return True
        return self.classes[g].pref == tid

    def _ancestry_ok(self, tid: int) -> bool:
        """All strict ancestors preferred, cached per preference epoch."""
        epoch = self.pref_epoch
        if self._anc_epoch[tid] == epoch:
            return self._anc_ok[tid] != 0
        todo = [tid]
        pending: list[int] = []
        while todo:
            j = todo.pop()
            if self._anc_epoch[j] == epoch:
                continue
            self._anc_epoch[j] = epoch
            pending.append(j)
            todo.extend(self.registry.txs[j].parents)
        pending.sort()
        txs = self.registry.txs
        for j in pending:
            ok = 1
            for p in txs[j].parents:
                if not self._anc_ok[p] or not (
                    self._cls[p] == _SINGLETON or self.classes[self._cls[p]].pref == p
                ):
                    ok = 0
                    break
            self._anc_ok[j] = ok
        return self._anc_ok[tid] != 0

    def strongly_preferred(self, tid: int) -> bool:
        """Preferred, and every ancestor preferred in its own conflict set."""
        return self.preferred(tid) and self._ancestry_ok(tid)

    def non_preferred_ancestors(self, tid: int) -> list[int]:
        """Strict ancestors not preferred in their conflict sets, ascending."""
        self._require(tid)
        if self._ancestry_ok(tid):
            return []
        out: list[int] = []
        self._visit_epoch += 1
        stamp = self._visit_epoch
        stack = list(self.registry.txs[tid].parents)
        while stack:
            j = stack.pop()
            if self._visit[j] == stamp:
                continue
            self._visit[j] = stamp
            # subtrees whose ancestry is clean contribute nothing below them
            if not (self._cls[j] == _SINGLETON or self.classes[self._cls[j]].pref == j):
                out.append(j)
            if self._anc_epoch[j] == self.pref_epoch and self._anc_ok[j]:
                continue
            if self._closed[j]:
                continue
            stack.extend(self.registry.txs[j].parents)
        out.sort()
        return out

    # -- acceptance -------------------------------------------------------

    def acceptable(self, tid: int) -> bool:
        """Whether ``tid`` may be accepted under the current counters.

        A transaction is acceptable when it is alone in its conflict set, its
        set counter reached the early threshold, and every parent is accepted
        or itself acceptable; or unconditionally once the counter reaches the
        late threshold.
        """
        self._require(tid)
        memo: dict[int, bool] = {}
        return self._acceptable(tid, memo)

    def _acceptable(self, tid: int, memo: dict[int, bool]) -> bool:
        got = memo.get(tid)
        if got is not None:
            return got
        if self._accepted[tid]:
            memo[tid] = True
            return True
        cnt = self.class_cnt(tid)
        if cnt >= self.beta2:
            memo[tid] = True
            return True
        ok = False
        if cnt >= self.beta1 and tid not in self.conflict_sets:
            memo[tid] = False   # break cycles defensively; DAG has none
            ok = all(
                self._accepted[p] or self._acceptable(p, memo)
                for p in self.registry.txs[tid].parents
            )
        memo[tid] = ok
        return ok

    def is_rejected(self, tid: int) -> bool:
        """True iff some other member of the transaction's conflict set is accepted."""
        self._require(tid)
        cs = self.conflict_sets.get(tid)
        if cs is None:
            return False
        return any(m != tid and self._accepted[m] for m in cs)

    def mark_accepted(self, tid: int) -> None:
        self._require(tid)
        if self._accepted[tid]:
            return
        self._accepted[tid] = 1
        self.accept_candidates.discard(tid)
        pos = self._unacc_pos.pop(tid, None)
        if pos is not None:
            moved = self.unaccepted[-1]
            if moved != tid:
                self.unaccepted[pos] = moved
                self._unacc_pos[moved] = pos
            self.unaccepted.pop()
        g = self._cls[tid]
        if g != _SINGLETON and self.classes[g].pref != tid:
            # an accepted transaction stays the preferred one in its set
            self.classes[g].pref = tid
            self._bump_pref_epoch()
        self._try_close(tid)

    def _try_close(self, tid: int) -> None:
        if self._closed[tid] or not self._accepted[tid]:
            return
        if all(self._closed[p] for p in self.registry.txs[tid].parents):
            self._closed[tid] = 1

    # -- counter updates on poll completion --------------------------------

    def apply_success(self, tid: int) -> None:
        """Credit a successful query to ``tid`` and all its live ancestors.

        Confidence rises for every visited transaction; within each conflict
        set the preferred member is re-evaluated, and the set counter extends
        its run or restarts at one when preference recently moved.  Frozen
        (accepted) transactions are skipped; walks stop at closed regions.
        """
        self._require(tid)
        b1, b2 = self.beta1, self.beta2
        self._visit_epoch += 1
        stamp = self._visit_epoch
        visit = self._visit
        txs = self.registry.txs
        stack = [tid]
        while stack:
            j = stack.pop()
            if visit[j] == stamp:
                continue
            visit[j] = stamp
            if self._closed[j]:
                continue
            if self._accepted[j]:
                self._try_close(j)
                stack.extend(txs[j].parents)
                continue
            self._d[j] += 1
            g = self._cls[j]
            if g == _SINGLETON:
                c = self._cnt[j] + 1
                self._cnt[j] = c
                if c >= b1:
                    self.accept_candidates.add(j)
            else:
                cls = self.classes[g]
                pref = cls.pref
                if j != pref and self._d[j] > self._d[pref] and not self._accepted[pref]:
                    cls.pref = j
                    self._bump_pref_epoch()
                if j != cls.last:
                    cls.last = j
                    cls.cnt = 1
                else:
                    cls.cnt += 1
                if cls.cnt >= b2:
                    self.accept_candidates.update(cls.members)
            stack.extend(txs[j].parents)

    def apply_failure(self, tid: int) -> list[int]:
        """Zero the acceptance counter of ``tid`` and all its live ancestors.

        Returns the ids whose conflict-set counter was actually reset, for
        trace records.
        """
        self._require(tid)
        resets: list[int] = []
        self._visit_epoch += 1
        stamp = self._visit_epoch
        visit = self._visit
        txs = self.registry.txs
        stack = [tid]
        while stack:
            j = stack.pop()
            if visit[j] == stamp:
                continue
            visit[j] = stamp
            if self._closed[j]:
                continue
            if self._accepted[j]:
                self._try_close(j)
                stack.extend(txs[j].parents)
                continue
            if self.reset_counter(j):
                resets.append(j)
            stack.extend(txs[j].parents)
        return resets

    def bump_counter(self, tid: int) -> None:
        """Single-set counter increment, without touching confidence."""
        if self._accepted[tid]:
            return
        g = self._cls[tid]
        if g == _SINGLETON:
            self._cnt[tid] += 1
            if self._cnt[tid] >= self.beta1:
                self.accept_candidates.add(tid)
        else:
            cls = self.classes[g]
            cls.cnt += 1
            if cls.cnt >= self.beta2:
                self.accept_candidates.update(cls.members)

    def apply_single_success(self, tid: int) -> None:
        """Success update for one transaction only (no ancestor walk)."""
        if self._accepted[tid] or self._closed[tid]:
            return
        self._d[tid] += 1
        g = self._cls[tid]
        if g == _SINGLETON:
            self._cnt[tid] += 1
            if self._cnt[tid] >= self.beta1:
                self.accept_candidates.add(tid)
            return
        cls = self.classes[g]
        pref = cls.pref
        if tid != pref and self._d[tid] > self._d[pref] and not self._accepted[pref]:
            cls.pref = tid
            self._bump_pref_epoch()
        if tid != cls.last:
            cls.last = tid
            cls.cnt = 1
        else:
            cls.cnt += 1
        if cls.cnt >= self.beta2:
            self.accept_candidates.update(cls.members)

    def reset_counter(self, tid: int) -> bool:
        """Zero the counter of one conflict set; returns True if it changed."""
        if self._accepted[tid]:
            return False
        g = self._cls[tid]
        if g == _SINGLETON:
            if self._cnt[tid]:
                self._cnt[tid] = 0
                return True
            return False
        cls = self.classes[g]
        if cls.cnt:
            cls.cnt = 0
            return True
        return False

    def reset_confidence(self, tid: int) -> None:
        self._require(tid)
        self._d[tid] = 0

    # -- queried set and candidate pools -----------------------------------

    def _enqueue_unqueried(self, tid: int) -> None:
        # no-ops never join the fresh pool: their creator polls them from the
        # no-op queue, and elsewhere they stay reachable through repolls; the
        # fresh pool thus tracks outstanding payload work only
        if self._queried[tid] or self.registry.txs[tid].payload is None:
            return
        self._unq_pos[tid] = len(self.unqueried)
        self.unqueried.append(tid)

    def mark_queried(self, tid: int) -> None:
        self._queried[tid] = 1
        pos = self._unq_pos.pop(tid, None)
        if pos is not None:
            lastv = self.unqueried[-1]
            if lastv != tid:
                self.unqueried[pos] = lastv
                self._unq_pos[lastv] = pos
            self.unqueried.pop()

    def unmark_queried(self, tid: int) -> None:
        if self._queried[tid]:
            self._queried[tid] = 0
            self._enqueue_unqueried(tid)

    def is_queried(self, tid: int) -> bool:
        return self._queried[tid] != 0

    def pick_unqueried(self, rng) -> int | None:
        if not self.unqueried:
            return None
        return self.unqueried[rng.randrange(len(self.unqueried))]

    def claim_noop_key(self, key: frozenset) -> bool:
        """Register a pending no-op parent set; False if one is already queued."""
        if key in self._pending_noop_keys:
            return False
        self._pending_noop_keys.add(key)
        return True

    def release_noop_key(self, parents) -> None:
        self._pending_noop_keys.discard(frozenset(parents))

    def _repollable_pred(self, tid: int) -> bool:
        if self._acceptable(tid, {}):
            return True
        for p in self.registry.txs[tid].parents:
            if not self.strongly_preferred(p) or self.is_rejected(p):
                return False
        return True

    def update_repollable(self) -> set[int]:
        """Rebuild the repollable set: acceptable transactions, plus those all
        of whose parents are strongly preferred and none rejected."""
        memo: dict[int, bool] = {}
        out = set()
        for tid in self.known_ids:
            if self._acceptable(tid, memo):
                out.add(tid)
                continue
            ok = True
            for p in self.registry.txs[tid].parents:
                if not self.strongly_preferred(p) or self.is_rejected(p):
                    ok = False
                    break
            if ok:
                out.add(tid)
        self.repollable = out
        return out

    def pick_repollable(self, rng, max_tries: int = 32) -> int | None:
        """Uniform draw from the unaccepted repollable transactions, skipping
        in-flight queries.

        Repolls exist to finish pending work, so accepted transactions are
        not re-queried (they stay members of :meth:`update_repollable`, which
        keeps the broader contract).  Rejection-samples the unaccepted pool,
        which is uniform over the accepting subset; falls back to an exact
        scan of that pool when unlucky.
        """
        pool = self.unaccepted
        if not pool:
            return None
        for _ in range(max_tries):
            tid = pool[rng.randrange(len(pool))]
            if tid in self.in_flight:
                continue
            if self._repollable_pred(tid):
                return tid
        cands = sorted(
            t for t in pool
            if t not in self.in_flight and self._repollable_pred(t)
        )
        if not cands:
            return None
        return cands[rng.randrange(len(cands))]

    # -- virtuous frontier --------------------------------------------------

    def virtuous_frontier(self) -> set[int]:
        """Leaves that conflict with nothing and whose ancestors are preferred.

        Maintained incrementally on insert; preference changes (rare) force a
        full refilter of the current leaves.
        """
        if self._vf_stale:
            self._vf = {
                t for t in self.known_ids
                if self._childcnt[t] == 0
                and t not in self.conflict_sets
                and self._ancestry_ok(t)
            }
            self._vf_stale = False
        return self._vf

    # -- serialization -------------------------------------------------------

    def canonical_lines(self) -> list[str]:
        """Order-independent text rendering (sorted by id) for golden tests."""
        lines = []
        for tid in sorted(self.known_ids):
            tx = self.registry.txs[tid]
            pid = tx.payload.pid if tx.payload is not None else "-"
            cs = ",".join(str(x) for x in sorted(self.conflict_set(tid)))
            lines.append(
                f"tx {tid} payload={pid} parents={list(tx.parents)} cs=[{cs}] "
                f"pref={self.class_pref(tid)} cnt={self.class_cnt(tid)} "
                f"d={self._d[tid]} accepted={int(self._accepted[tid])} "
                f"queried={int(self._queried[tid])}"
            )
        vf = ",".join(str(x) for x in sorted(self.virtuous_frontier()))
        lines.append(f"frontier [{vf}]")
        return lines
