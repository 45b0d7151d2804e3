"""``bakup-sim`` command line: scenario replay, single LP-loss points, sweeps."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import scenario as scen
from .errors import BakupError, ConfigError
from .strategies import (
    DEFAULT_STEPS,
    EPSILONS,
    MEDIAN_WIDTH,
    WIDTHS,
    Scenario,
    Strategy,
    StrategySpec,
    default_entry_grid,
    loss_closed_form,
    loss_simulated,
    sweep,
    width_bands,
    worst_cases,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def num(x: float) -> str:
    """Locale-free 12-significant-digit rendering used in every CSV."""
    return format(float(x), ".12g")


def _floats(text: str) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _unit(text: str) -> float:
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bakup-sim", description="Binary-event insurance protocol simulator.")
    ap.add_argument("--seed", type=int, default=None, help="reserved; all runs are deterministic")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="replay a scenario file")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)

    lp = sub.add_parser("lp-loss", help="divergence loss of one strategy at one entry price")
    lp.add_argument("--strategy", required=True, choices=[s.value for s in Strategy])
    lp.add_argument("--epsilon", required=True, type=float)
    lp.add_argument("--entry-norm", required=True, type=_unit, help="normalized log entry price in [0, 1]")
    lp.add_argument("--width", type=float, default=MEDIAN_WIDTH)
    lp.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    lp.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="swap steps for the simulated route")
    lp.add_argument("--width-mode", choices=["log", "linear"], default="log")

    sw = sub.add_parser("sweep", help="full strategy x epsilon x entry x width grid to CSV")
    sw.add_argument("--out", required=True, type=Path)
    sw.add_argument("--epsilons", type=_floats, default=list(EPSILONS))
    sw.add_argument("--widths", type=_floats, default=list(WIDTHS))
    sw.add_argument("--entries", type=int, default=101, help="number of evenly spaced normalized entries")
    sw.add_argument("--method", choices=["closed-form", "simulated"], default="closed-form")
    sw.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    sw.add_argument("--width-mode", choices=["log", "linear"], default="log")
    sw.add_argument("--workers", type=int, default=None, help="defaults to $BAKUP_SIM_THREADS or 1")
    return ap


def cmd_run(args) -> int:
    sc = scen.load(args.scenario)
    result = scen.run(sc)
    scen.write_outputs(result, args.out)
    print(f"{len(result.log)} steps replayed; outputs in {args.out}")
    return EXIT_OK


def cmd_lp_loss(args) -> int:
    spec = StrategySpec(args.strategy, args.epsilon, args.entry_norm, args.width, args.width_mode)
    closed = loss_closed_form(spec, args.scenario)
    sim = loss_simulated(spec, args.scenario, steps=args.steps)
    print(f"strategy={spec.kind.value} epsilon={num(spec.epsilon)} x_entry={num(spec.x_entry)} "
          f"width={num(spec.width)} scenario={args.scenario}")
    print(f"closed_form_loss={num(closed.loss)} simulated_loss={num(sim.loss)} "
          f"diff={num(sim.loss - closed.loss)}")
    return EXIT_OK


SWEEP_HEADER = ["strategy", "epsilon", "x_entry", "width", "scenario", "terminal_value", "loss"]


def cmd_sweep(args) -> int:
    if not args.epsilons:
        raise ValueError("epsilon list is empty")
    if not args.widths:
        raise ValueError("width list is empty")
    if args.entries < 2:
        raise ValueError("need at least 2 entry points")
    rows = sweep(
        epsilons=args.epsilons, entries=default_entry_grid(args.entries), widths=args.widths,
        method=args.method, steps=args.steps, width_mode=args.width_mode, workers=args.workers,
    )
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    for kind in Strategy:
        for sc in Scenario:
            with open(out / f"{kind.value}_{sc.value}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SWEEP_HEADER)
                for r in rows:
                    if r.strategy == kind.value and r.scenario == sc.value:
                        w.writerow([r.strategy, num(r.epsilon), num(r.x_entry), num(r.width), r.scenario,
                                    num(r.terminal_value), num(r.loss)])
    with open(out / "bands.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "epsilon", "x_entry", "scenario", "loss_min", "loss_median", "loss_max"])
        for b in width_bands(rows):
            w.writerow([b.strategy, num(b.epsilon), num(b.x_entry), b.scenario,
                        num(b.loss_min), num(b.loss_median), num(b.loss_max)])

    widths = sorted(args.widths)
    width = MEDIAN_WIDTH if any(abs(x - MEDIAN_WIDTH) < 1e-12 for x in widths) else widths[len(widths) // 2]
    worst = worst_cases(rows, width)
    by_key = {(c.strategy, c.epsilon): c for c in worst}
    # reduction is measured against uniform at the smallest epsilon
    lo, hi = min(args.epsilons), max(args.epsilons)
    naive = by_key.get((Strategy.UNIFORM.value, lo))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "epsilon", "width", "worst_loss", "worst_x_entry", "worst_scenario",
                    "reduction_vs_uniform_min_eps"])
        for c in worst:
            red = (naive.loss - c.loss) / naive.loss if naive and naive.loss > 0 else float("nan")
            w.writerow([c.strategy, num(c.epsilon), num(c.width), num(c.loss), num(c.x_entry), c.scenario, num(red)])
    cons = by_key.get((Strategy.EDGES.value, hi))
    if naive and cons and naive.loss > 0:
        red = (naive.loss - cons.loss) / naive.loss
        print(f"worst-loss reduction (uniform eps={num(lo)} -> edges eps={num(hi)}): {red:.1%}")
    print(f"{len(rows)} grid points written to {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "lp-loss": cmd_lp_loss, "sweep": cmd_sweep}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BakupError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
