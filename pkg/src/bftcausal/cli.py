"""Command-line scenario runner.

``bftcausal run`` executes one scenario (preset, config file and flags, in
increasing precedence), writes the trace, checks it and prints a report.
``bftcausal sweep`` tabulates Channel Sync queue delays as ``delta_s`` varies.

Exit codes: 0 for a clean verdict or an attack preset whose expected
violation was found; 1 for an unexpected verdict or an aborted run;
2 for configuration errors.
"""

from __future__ import annotations

import argparse
import random
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .core import ConfigError, ScenarioConfig, config_from_mapping, tomllib
from .oracle import Verdict
from .scenarios import PRESETS, queue_delays, random_workload, run_scenario, sweep
from .simnet import SimulationAborted, Trace


@dataclass
class RunReport:
    config: ScenarioConfig
    trace_path: str | None
    verdict: Verdict | None
    stats: dict

    def render(self) -> str:
        cfg = self.config
        lines = [f"protocol={cfg.protocol} n={cfg.n} delta={cfg.delta} delta_s={cfg.delta_s} "
                 f"delta_r={cfg.delta_r} seed={cfg.seed} horizon={cfg.horizon} "
                 f"multicast={cfg.multicast} byzantine={sorted(cfg.byzantine)}"]
        if self.trace_path:
            lines.append(f"trace: {self.trace_path}")
        s = self.stats
        lines.append(f"app sends: {s['sent']}  deliveries: {s['delivered']}  "
                     f"queue delay max/mean: {s['max_delay']}/{s['mean_delay']:.2f}")
        lines.append("timeouts per process: " +
                     (", ".join(f"p{p}={c}" for p, c in sorted(s["timeouts"].items())) or "none"))
        if self.verdict is not None:
            lines.append(self.verdict.summary())
        return "\n".join(lines)


def run_stats(trace: Trace, cfg: ScenarioConfig) -> dict:
    """Statistics recomputed from the trace alone."""
    sent = {ev.envelope.msg for ev in trace.by_kind("send") if ev.envelope.kind == "app"}
    delivered = sum(1 for _ in trace.by_kind("deliver"))
    delays = queue_delays(trace, cfg.correct)
    timeouts = Counter(ev.process for ev in trace.by_kind("timeout"))
    return {"sent": len(sent), "delivered": delivered,
            "max_delay": max(delays, default=0),
            "mean_delay": sum(delays) / len(delays) if delays else 0.0,
            "timeouts": dict(timeouts)}


_FLAG_FIELDS = ("protocol", "n", "delta", "delta_s", "delta_r", "seed", "horizon")


def _base_mapping(args) -> tuple[dict | None, object]:
    preset = None
    base = None
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        preset = PRESETS[args.preset]
        base = preset.config(args.seed).to_json()
    if args.config:
        try:
            raw = tomllib.loads(Path(args.config).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        base = {**base, **raw} if base is not None else raw
    return base, preset


def build_config(args) -> tuple[ScenarioConfig, object]:
    base, preset = _base_mapping(args)
    raw = dict(base or {})
    for name in _FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    if args.multicast:
        raw["multicast"] = True
    if args.mcast_hide_group:
        raw["mcast_hide_group"] = True
        raw["multicast"] = True
    if base is None:
        # flags only: a seeded random workload of 20 messages
        if "n" not in raw or "delta" not in raw:
            raise ConfigError("without --preset or --config, both --n and --delta are required")
        rng = random.Random(raw.get("seed", 0))
        workload = random_workload(rng, raw["n"], 20, 4 * raw["delta"],
                                   multicast=raw.get("multicast", False))
        raw["workload"] = [{"time": r.time, "sender": r.sender,
                            "dest": sorted(r.dest) if isinstance(r.dest, frozenset) else r.dest}
                           for r in workload]
        if "horizon" not in raw:
            end = max(r.time for r in workload)
            raw["horizon"] = end + 2 * raw["delta"] * 20 + 10 * raw["delta"]
    for key in [k for k, v in raw.items() if v is None]:
        del raw[key]
    if args.delta is not None and args.delta_r is None and base and base.get("delta_r") == base.get("delta"):
        # delta_r tracks delta unless set explicitly
        raw.pop("delta_r", None)
    return config_from_mapping(raw), preset


def cmd_run(args) -> int:
    try:
        cfg, preset = build_config(args)
        trace, verdict = run_scenario(cfg, check=args.check)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        if args.out:
            exc.trace.write(args.out)
        return 1
    if args.out:
        trace.write(args.out)
        if verdict is not None:
            Path(str(args.out) + ".verdict.jsonl").write_text(verdict.to_jsonl())
    report = RunReport(cfg, args.out, verdict, run_stats(trace, cfg))
    print(report.render())
    if verdict is None:
        return 0
    if preset is not None and preset.expect != "clean":
        ok = preset.outcome_ok(verdict)
        print(f"expected {preset.expect} violation: {'found' if ok else 'ABSENT'}")
        return 0 if ok else 1
    return 0 if verdict.clean else 1


def parse_range(text: str) -> list[int]:
    """``"0,2,5"`` or inclusive ``"start:stop[:step]"``."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = [int(x) for x in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        if step <= 0:
            raise ValueError("step must be positive")
        return list(range(start, stop + 1, step))
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args) -> int:
    try:
        values = parse_range(args.delta_s)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if not values or any(v < 0 for v in values):
        print("config error: delta_s range is empty or negative", file=sys.stderr)
        return 2
    rows = sweep(values, args.delta_r, delta=args.delta, n=args.n, count=args.count,
                 seeds=range(args.seeds))
    out = ["delta_s\tdelta_r\tbound\truns\tmean_delay\tmax_delay\tbound_held"]
    out += [f"{r.delta_s}\t{r.delta_r}\t{r.bound}\t{r.runs}\t{r.mean_delay:.3f}\t"
            f"{r.max_delay}\t{str(r.bound_held).lower()}" for r in rows]
    print("\n".join(out))
    return 0 if all(r.bound_held for r in rows) else 1


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bftcausal", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and check it")
    run.add_argument("--config", type=Path)
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--protocol", choices=["rst", "sender_inhibition", "channel_sync"])
    run.add_argument("--n", type=int)
    run.add_argument("--delta", type=int)
    run.add_argument("--delta-s", dest="delta_s", type=int)
    run.add_argument("--delta-r", dest="delta_r", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--horizon", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--check", action=argparse.BooleanOptionalAction, default=True)
    run.add_argument("--multicast", action="store_true")
    run.add_argument("--mcast-hide-group", dest="mcast_hide_group", action="store_true")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="Channel Sync queue delay as delta_s varies")
    sw.add_argument("--delta-s", dest="delta_s", default="0:5",
                    help="comma list or inclusive start:stop[:step]")
    sw.add_argument("--delta-r", dest="delta_r", type=int)
    sw.add_argument("--delta", type=int, default=5)
    sw.add_argument("--n", type=int, default=4)
    sw.add_argument("--count", type=int, default=30)
    sw.add_argument("--seeds", type=int, default=5)
    sw.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("presets", help="list the named scenarios")
    ls.set_defaults(func=lambda a: print("\n".join(
        f"{p.name:28s} expect={p.expect:9s} {p.about}" for p in PRESETS.values())) or 0)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
