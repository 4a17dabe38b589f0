"""Run traces: in-memory records, JSON-lines persistence, summary CSV.

A record is ``(time, kind, party, fields)`` with per-kind field names below.
Dumps are byte-stable for identical runs: keys sorted, compact separators,
floats via their shortest repr.
"""

from __future__ import annotations

import json

LEVEL_METRICS = 0   # keep no records; hooks still see everything
LEVEL_PROTO = 1     # protocol-level events
LEVEL_FULL = 2      # plus per-message events

FIELD_NAMES = {
    "submit": ("payload",),
    "broadcast": ("payload", "tx"),
    "hear": ("tx", "origin"),
    "pollStart": ("tx", "cat"),
    "pollSuccess": ("tx",),
    "pollFail": ("tx", "resets"),
    "pollComplete": ("tx", "resets"),
    "pollTimeout": ("tx",),
    "deliver": ("payload", "tx", "cnt", "cs"),
    "propose": ("value",),
    "decide": ("value", "round"),
    "send": ("to", "kind"),
    "query": ("tx", "frm"),
    "vote": ("tx", "voter", "value"),
}

SCHEMA_VERSION = 1


class Recorder:
    """Collects protocol events; hooks observe every event regardless of level."""

    def __init__(self, level: int = LEVEL_PROTO):
        self.level = level
        self.records: list[tuple] = []
        self.hooks: list = []

    @property
    def full(self) -> bool:
        return self.level >= LEVEL_FULL

    def emit(self, t: float, kind: str, party: int, fields: tuple = ()) -> None:
        if self.level >= LEVEL_PROTO:
            self.records.append((t, kind, party, fields))
        for h in self.hooks:
            h(t, kind, party, fields)

    def emit_full(self, t: float, kind: str, party: int, fields: tuple = ()) -> None:
        if self.level >= LEVEL_FULL:
            self.records.append((t, kind, party, fields))


def record_to_obj(rec: tuple) -> dict:
    t, kind, party, fields = rec
    obj = {"t": t, "kind": kind, "party": party}
    names = FIELD_NAMES.get(kind, ())
    for name, value in zip(names, fields):
        if isinstance(value, tuple):
            value = list(value)
        obj[name] = value
    return obj


def obj_to_record(obj: dict) -> tuple:
    kind = obj["kind"]
    names = FIELD_NAMES.get(kind, ())
    fields = []
    for name in names:
        v = obj.get(name)
        if isinstance(v, list):
            v = tuple(v)
        fields.append(v)
    return (obj["t"], kind, obj["party"], tuple(fields))


def payload_table(registry) -> dict:
    out = {}
    for pid, p in sorted(registry.payloads.items()):
        out[str(pid)] = {
            "inputs": sorted([list(ref) for ref in p.inputs]),
            "outputs": [list(o) for o in p.outputs],
            "auth": p.auth_valid,
        }
    return out


def dump_jsonl(path, header: dict, records: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for rec in records:
            fh.write(json.dumps(record_to_obj(rec), sort_keys=True,
                                separators=(",", ":")) + "\n")


def load_jsonl(path):
    header = None
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: corrupt trace line: {exc}") from None
            if lineno == 1:
                if "schema" not in obj:
                    raise ValueError(f"{path}:1: missing trace header")
                header = obj
            else:
                if "kind" not in obj or "t" not in obj:
                    raise ValueError(f"{path}:{lineno}: corrupt trace record")
                records.append(obj_to_record(obj))
    if header is None:
        raise ValueError(f"{path}: empty trace file")
    return header, records


def write_summary_csv(path, records: list[tuple]) -> None:
    """Per-party delivery and decision times, one row per event."""
    rows = ["event,party,subject,time"]
    for t, kind, party, fields in records:
        if kind == "deliver":
            rows.append(f"deliver,{party},{fields[0]},{t!r}")
        elif kind == "decide":
            rows.append(f"decide,{party},{fields[0]},{t!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
