"""Command-line harness: seeded runs, delay sweeps, trace replay, attack demo."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .analysis import SWEEP_COLUMNS, sweep_rows
from .checkers import hard_safety_ok
from .party import ProtocolParams
from .scenario import (
    OUT_DIR_ENV,
    PROTOCOLS,
    ScenarioConfig,
    WorkloadConfig,
    compute_verdicts,
    run_scenario,
)
from .simnet import NetworkConfig
from .trace import load_jsonl


def _print_verdicts(verdicts) -> None:
    for v in verdicts:
        print(f"  {v}")


def cmd_run(args) -> int:
    try:
        config = ScenarioConfig.from_file(args.config)
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config.seed = args.seed
    if args.horizon is not None:
        config.horizon = args.horizon
    if args.protocol is not None:
        config.protocol = args.protocol
    try:
        config.validate()
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run_scenario(config, out_dir=args.out_dir)
    m = result.metrics
    print(f"protocol={config.protocol} adversary={config.adversary} "
          f"seed={config.seed} (replay with --seed {config.seed})")
    print(f"simulated {result.world.sched.now:.3f}s, "
          f"{result.world.events_processed} events, "
          f"{len(result.records)} trace records")
    if config.protocol == "snowball":
        values = {}
        for p in m.decided:
            values[p] = result.world.parties[p].decided_value
        print(f"decided: {len(m.decided)}/{len(m.honest)} honest parties")
    else:
        full = sum(1 for pid in m.deliveries if m.delivered_everywhere(pid))
        print(f"payloads delivered everywhere: {full}/{len(m.expected)}")
    _print_verdicts(result.verdicts)
    return 0 if result.ok else 1


def parse_gammas(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("gamma range must be start:stop:step")
        start, stop, step = (float(x) for x in parts)
        out = []
        g = start
        while g <= stop + 1e-12:
            out.append(round(g, 10))
            g += step
        return out
    return [float(x) for x in text.split(",") if x]


def cmd_sweep(args) -> int:
    gammas = parse_gammas(args.gamma)
    rows = sweep_rows(gammas, args.beta1, args.runs, args.seed)
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(
            "" if row[c] is None else repr(row[c]) for c in SWEEP_COLUMNS))
    text = "\n".join(lines) + "\n"
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "sweep.csv")
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_replay(args) -> int:
    try:
        header, records = load_jsonl(args.log)
    except (ValueError, OSError) as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return 2
    verdicts = compute_verdicts(header["config"], header, records,
                                header["honest"])
    print(f"replayed {len(records)} records from {args.log}")
    _print_verdicts(verdicts)
    return 0 if hard_safety_ok(verdicts) else 1


def demo_config(seed: int) -> ScenarioConfig:
    return ScenarioConfig(
        protocol="avalanche",
        params=ProtocolParams(k=10, alpha=8, beta1=8, beta2=80, max_poll=4,
                              delta_query=1.0),
        network=NetworkConfig(n=20, f=1, lam=10.0),
        workload=WorkloadConfig(count=4, rate=2.0, target_index=3),
        adversary="delay-attack",
        victim_poll_limit=400,
        horizon=240.0,
        seed=seed,
        trace_level="proto",
    )


def cmd_attack_demo(args) -> int:
    config = demo_config(args.seed)
    result = run_scenario(config, out_dir=args.out_dir)
    m = result.metrics
    victim = m.victim
    adv = result.world.adversary
    target = m.target_pid
    got = m.deliveries.get(target, {})
    print(f"delay attack demo (seed {config.seed}): target payload {target}, "
          f"victim party {victim}")
    print(f"poisoned transactions injected: {adv.injections}")
    print(f"target delivered at {len(set(got) & set(m.honest))}/{len(m.honest)} "
          f"honest parties; victim delivered: {victim in got}")
    print(f"victim completed {m.victim_polls_since_target()} polls "
          f"after the target appeared without accepting it")
    resets = m.target_resets.get(victim, 0)
    print(f"target counter resets at victim: {resets}")
    _print_verdicts(result.verdicts)
    return 0 if result.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="snowlab",
        description="Discrete-event lab for sampling-based DAG consensus",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="execute one scenario from a JSON config")
    p.add_argument("--config", required=True, help="scenario config path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--horizon", type=float, help="override the horizon")
    p.add_argument("--protocol", choices=PROTOCOLS, help="override the protocol")
    p.add_argument("--out-dir", help=f"artifact directory (or ${OUT_DIR_ENV})")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="delay formulas vs Monte Carlo over gamma")
    p.add_argument("--gamma", default="0:0.5:0.05",
                   help="grid: start:stop:step or comma list")
    p.add_argument("--beta1", type=int, default=15)
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", help=f"write sweep.csv here (or ${OUT_DIR_ENV})")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("replay", help="re-run the checkers on a stored trace")
    p.add_argument("--log", required=True, help="run.jsonl path")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("attack-demo",
                       help="small targeted-delay attack demonstration")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_attack_demo)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
