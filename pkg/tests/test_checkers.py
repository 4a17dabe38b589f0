"""Checker tests over hand-built and recorded traces."""

from snowlab.checkers import (
    check_consensus,
    check_generic_broadcast,
    check_counter_thresholds,
    hard_safety_ok,
)

TABLE = {
    "0": {"inputs": [], "outputs": [[0, 1], [0, 1], [0, 1]], "auth": True},
    "1": {"inputs": [[0, 0]], "outputs": [[1, 1], [1, 1]], "auth": True},
    "2": {"inputs": [[1, 1]], "outputs": [[2, 1]], "auth": True},   # spends 1
    "3": {"inputs": [[0, 1]], "outputs": [[3, 1]], "auth": True},
}


def by_name(verdicts):
    return {v.name: v for v in verdicts}


def test_honest_trace_all_hold():
    records = [
        (0.1, "broadcast", 0, (1, 10)),
        (0.2, "broadcast", 1, (3, 11)),
        (0.5, "deliver", 0, (1, 10, 4, 1)),
        (0.6, "deliver", 1, (1, 10, 4, 1)),
        (0.7, "deliver", 0, (3, 11, 4, 1)),
        (0.8, "deliver", 1, (3, 11, 4, 1)),
    ]
    v = by_name(check_generic_broadcast(records, TABLE, {0, 1}, 0, 10.0))
    assert all(x.holds for x in v.values())


def test_double_delivery_violates_integrity_with_witness():
    records = [
        (0.1, "broadcast", 0, (1, 10)),
        (0.5, "deliver", 0, (1, 10, 4, 1)),
        (0.9, "deliver", 0, (1, 10, 4, 1)),
    ]
    v = by_name(check_generic_broadcast(records, TABLE, {0}, 0, 10.0))
    assert not v["integrity"].holds
    assert v["integrity"].witness == [records[2]]


def test_unbroadcast_delivery_violates_integrity():
    records = [(0.5, "deliver", 0, (1, 10, 4, 1))]
    v = by_name(check_generic_broadcast(records, TABLE, {0}, 0, 10.0))
    assert not v["integrity"].holds


def test_partial_order_violation():
    records = [
        (0.1, "broadcast", 0, (1, 10)),
        (0.2, "broadcast", 0, (2, 11)),
        (0.5, "deliver", 0, (1, 10, 4, 1)),
        (0.6, "deliver", 0, (2, 11, 4, 1)),
        (0.5, "deliver", 1, (2, 11, 4, 1)),    # party 1 flips related pair
        (0.6, "deliver", 1, (1, 10, 4, 1)),
    ]
    v = by_name(check_generic_broadcast(records, TABLE, {0, 1}, 0, 10.0))
    assert not v["partial-order"].holds
    assert (1, 2, 1) in v["partial-order"].witness
    # unrelated payloads in either order are fine
    records2 = [
        (0.1, "broadcast", 0, (1, 10)),
        (0.2, "broadcast", 0, (3, 11)),
        (0.5, "deliver", 0, (1, 10, 4, 1)),
        (0.6, "deliver", 0, (3, 11, 4, 1)),
        (0.5, "deliver", 1, (3, 11, 4, 1)),
        (0.6, "deliver", 1, (1, 10, 4, 1)),
    ]
    v2 = by_name(check_generic_broadcast(records2, TABLE, {0, 1}, 0, 10.0))
    assert v2["partial-order"].holds


def test_external_validity_violation():
    # payload 2 spends an output of 1, delivered before 1 arrives
    records = [
        (0.1, "broadcast", 0, (2, 11)),
        (0.2, "broadcast", 0, (1, 10)),
        (0.5, "deliver", 0, (2, 11, 4, 1)),
        (0.6, "deliver", 0, (1, 10, 4, 1)),
    ]
    v = by_name(check_generic_broadcast(records, TABLE, {0}, 0, 10.0))
    assert not v["external-validity"].holds
    assert (0, 2) in v["external-validity"].witness


def test_liveness_flags():
    records = [
        (0.1, "broadcast", 0, (1, 10)),
        (0.5, "deliver", 1, (1, 10, 4, 1)),    # broadcaster itself never did
    ]
    v = by_name(check_generic_broadcast(records, TABLE, {0, 1}, 0, 10.0))
    assert v["integrity"].holds
    assert not v["validity"].holds and v["validity"].kind == "liveness"
    assert not v["agreement"].holds and v["agreement"].kind == "liveness"
    assert (1, [0]) in v["agreement"].witness
    assert hard_safety_ok(list(v.values()))    # liveness flags are not failures


def test_counter_thresholds():
    good = [
        (0.5, "deliver", 0, (1, 10, 15, 1)),
        (0.6, "deliver", 0, (2, 11, 150, 3)),
    ]
    assert check_counter_thresholds(good, 15, 150).holds
    forged = [(0.5, "deliver", 0, (1, 10, 3, 1))]
    v = check_counter_thresholds(forged, 15, 150)
    assert not v.holds and v.witness == forged
    early_conflicting = [(0.5, "deliver", 0, (1, 10, 20, 2))]
    assert not check_counter_thresholds(early_conflicting, 15, 150).holds


def test_consensus_checks():
    ok = [
        (0.0, "propose", 0, (1,)),
        (0.0, "propose", 1, (1,)),
        (1.0, "decide", 0, (1, 5)),
        (1.2, "decide", 1, (1, 6)),
    ]
    v = by_name(check_consensus(ok, {0, 1}, 10.0))
    assert all(x.holds for x in v.values())

    split = [
        (0.0, "propose", 0, (1,)),
        (0.0, "propose", 1, (0,)),
        (1.0, "decide", 0, (1, 5)),
        (1.2, "decide", 1, (0, 6)),
    ]
    v = by_name(check_consensus(split, {0, 1}, 10.0))
    assert not v["agreement"].holds
    assert v["validity"].holds      # proposals were mixed, decisions proposed

    double = [
        (0.0, "propose", 0, (1,)),
        (1.0, "decide", 0, (1, 5)),
        (2.0, "decide", 0, (1, 7)),
    ]
    v = by_name(check_consensus(double, {0}, 10.0))
    assert not v["integrity"].holds

    unpproposed = [
        (0.0, "propose", 0, (1,)),
        (0.0, "propose", 1, (1,)),
        (1.0, "decide", 0, (0, 5)),
    ]
    v = by_name(check_consensus(unpproposed, {0, 1}, 10.0))
    assert not v["validity"].holds

    undecided = [
        (0.0, "propose", 0, (1,)),
        (0.0, "propose", 1, (1,)),
        (1.0, "decide", 0, (1, 5)),
    ]
    v = by_name(check_consensus(undecided, {0, 1}, 10.0))
    assert not v["termination"].holds and v["termination"].kind == "liveness"


def test_witness_reproduces_violation():
    records = [
        (0.1, "broadcast", 0, (1, 10)),
        (0.5, "deliver", 0, (1, 10, 4, 1)),
        (0.9, "deliver", 0, (1, 10, 4, 1)),
    ]
    first = by_name(check_generic_broadcast(records, TABLE, {0}, 0, 10.0))
    witness = first["integrity"].witness
    # replaying prefix-up-to-witness reproduces the same violation
    replay = records[:2] + witness
    again = by_name(check_generic_broadcast(replay, TABLE, {0}, 0, 10.0))
    assert not again["integrity"].holds
