"""Trace checkers for the broadcast and consensus properties.

Safety clauses (integrity, partial order, external validity; and for
consensus: validity, integrity, agreement) are hard verdicts with replayable
witnesses.  The eventual clauses (delivery everywhere, termination) can only
be observed up to the run's horizon, so they come back as liveness flags:
expected to hold in honest runs and expected to fail under the liveness
attacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SAFETY = "safety"
LIVENESS = "liveness"


@dataclass
class Verdict:
    name: str
    kind: str
    holds: bool
    witness: list = field(default_factory=list)
    note: str = ""

    def __str__(self):
        state = "holds" if self.holds else ("violated" if self.kind == SAFETY else "flagged")
        extra = f" ({self.note})" if self.note else ""
        return f"{self.name} [{self.kind}]: {state}{extra}"


def _payload_inputs(payload_entry) -> list[tuple[int, int]]:
    return [tuple(ref) for ref in payload_entry["inputs"]]


def payloads_related(a: str, b: str, table: dict) -> bool:
    if a == b:
        return False
    ia = {ref[0] for ref in _payload_inputs(table[a])}
    ib = {ref[0] for ref in _payload_inputs(table[b])}
    return int(b) in ia or int(a) in ib


def check_generic_broadcast(records, table, honest, genesis_pid, horizon=None):
    """Check the broadcast contract over one trace.

    ``table`` maps payload-id strings to their inputs/outputs/auth entries,
    as stored in the trace header.  ``honest`` is the set of honest parties.
    """
    broadcast_t: dict[int, float] = {}
    broadcasters: dict[int, int] = {}
    delivers: dict[int, dict[int, float]] = {}
    order: dict[int, list[int]] = {}
    integrity_bad = []
    for rec in records:
        t, kind, party, fields = rec
        if kind == "broadcast":
            pid = fields[0]
            if pid not in broadcast_t:
                broadcast_t[pid] = t
                broadcasters[pid] = party
        elif kind == "deliver":
            pid = fields[0]
            seen = delivers.setdefault(pid, {})
            if party in seen:
                integrity_bad.append(rec)
            elif pid != genesis_pid and pid not in broadcast_t:
                integrity_bad.append(rec)
            else:
                seen[party] = t
                order.setdefault(party, []).append(pid)

    verdicts = [
        Verdict("integrity", SAFETY, not integrity_bad, integrity_bad,
                "at-most-once delivery of previously broadcast payloads")
    ]

    # partial order over related delivered pairs
    po_bad = []
    index = {p: {pid: i for i, pid in enumerate(seq)} for p, seq in order.items()}
    delivered_ids = sorted(delivers)
    for i, a in enumerate(delivered_ids):
        for b in delivered_ids[i + 1:]:
            if not payloads_related(str(a), str(b), table):
                continue
            sign = None
            for p in sorted(index):
                ia, ib = index[p].get(a), index[p].get(b)
                if ia is None or ib is None:
                    continue
                s = ia < ib
                if sign is None:
                    sign = s
                elif s != sign:
                    po_bad.append((a, b, p))
    verdicts.append(
        Verdict("partial-order", SAFETY, not po_bad, po_bad,
                "related payloads delivered in one order")
    )

    # external validity: replay each party's delivery sequence
    ev_bad = []
    for p in sorted(order):
        spent: set[tuple[int, int]] = set()
        have: dict[int, int] = {genesis_pid: len(table[str(genesis_pid)]["outputs"])}
        for pid in order[p]:
            entry = table[str(pid)]
            refs = _payload_inputs(entry)
            ok = entry["auth"]
            for src, idx in refs:
                if src not in have or idx >= have[src] or (src, idx) in spent:
                    ok = False
            if not ok:
                ev_bad.append((p, pid))
            spent.update(refs)
            have[pid] = len(entry["outputs"])
    verdicts.append(
        Verdict("external-validity", SAFETY, not ev_bad, ev_bad,
                "every delivery valid against prior deliveries")
    )

    # liveness flags, observed at the horizon
    v_bad = [
        (p, pid) for pid, p in sorted(broadcasters.items())
        if p in honest and p not in delivers.get(pid, {})
    ]
    verdicts.append(
        Verdict("validity", LIVENESS, not v_bad, v_bad,
                f"broadcaster delivered own payload by horizon={horizon}")
    )
    a_bad = []
    for pid in sorted(delivers):
        if pid == genesis_pid:
            continue
        missing = sorted(set(honest) - set(delivers[pid]))
        if delivers[pid] and missing:
            a_bad.append((pid, missing))
    verdicts.append(
        Verdict("agreement", LIVENESS, not a_bad, a_bad,
                f"delivered payloads reached all honest parties by horizon={horizon}")
    )
    return verdicts


def check_counter_thresholds(records, beta1, beta2):
    """Every delivery closed out its counter: early threshold for
    non-conflicting transactions, late threshold for conflicting ones."""
    bad = []
    for rec in records:
        t, kind, party, fields = rec
        if kind != "deliver":
            continue
        _, _, cnt, cs = fields
        need = beta1 if cs == 1 else beta2
        if cnt < need:
            bad.append(rec)
    return Verdict("counter-thresholds", SAFETY, not bad, bad,
                   f"cnt >= {beta1} (non-conflicting) / {beta2} (conflicting) at delivery")


def check_consensus(records, honest, horizon=None):
    proposals: dict[int, int] = {}
    decides: dict[int, list] = {}
    for rec in records:
        t, kind, party, fields = rec
        if kind == "propose":
            if fields[0] is not None:
                proposals[party] = fields[0]
        elif kind == "decide":
            decides.setdefault(party, []).append(rec)

    integrity_bad = [recs[1] for recs in
                     (decides[p] for p in sorted(decides)) if len(recs) > 1]
    verdicts = [Verdict("integrity", SAFETY, not integrity_bad, integrity_bad,
                        "no party decides twice")]

    decided_values = {p: recs[0][3][0] for p, recs in decides.items() if p in honest}
    val_bad = []
    honest_props = {proposals[p] for p in proposals if p in honest}
    if len(honest_props) == 1:
        want = next(iter(honest_props))
        val_bad = [(p, v) for p, v in sorted(decided_values.items()) if v != want]
    proposed_values = set(proposals.values())
    val_bad += [
        (p, v) for p, v in sorted(decided_values.items()) if v not in proposed_values
    ]
    verdicts.append(Verdict("validity", SAFETY, not val_bad, val_bad,
                            "decisions follow unanimous honest proposals"))

    agr_bad = []
    if len(set(decided_values.values())) > 1:
        agr_bad = sorted(decided_values.items())
    verdicts.append(Verdict("agreement", SAFETY, not agr_bad, agr_bad,
                            "all honest decisions equal"))

    undecided = sorted(p for p in honest if p in proposals and p not in decides)
    verdicts.append(Verdict("termination", LIVENESS, not undecided, undecided,
                            f"every proposer decided by horizon={horizon}"))
    return verdicts


def hard_safety_ok(verdicts) -> bool:
    return all(v.holds for v in verdicts if v.kind == SAFETY)
