"""Command-line entry point: ``ipdopt run | certify | gen-data``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import CertificateInfeasibleError, IPDError, ParseError, SpecError
from .graph import analyze, ring_with_random_chords
from .harness import PRESETS, ExperimentSpec, load_spec, run_experiment, validate_spec
from .metrics import derive_parameters
from .objectives import random_centers, synthetic_logistic_dataset, write_centers, write_libsvm


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_run(args) -> int:
    if args.preset is None and args.spec is None:
        print("error: give a spec file or --preset", file=sys.stderr)
        return 2
    base = PRESETS[args.preset] if args.preset else None
    try:
        spec = load_spec(args.spec, base) if args.spec else base
        if args.seed is not None:
            spec = replace(spec, seeds=(args.seed,))
        validate_spec(spec)
    except ParseError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        for name, msg in exc.problems:
            print(f"spec error: field '{name}': {msg}", file=sys.stderr)
        return 2
    out = args.out or spec.out
    rows = run_experiment(spec, out)
    for r in rows:
        reached = "-" if r.rounds_to_target is None else str(r.rounds_to_target)
        print(f"{r.trace_file or r.method}: {r.status}, {r.rounds} rounds, "
              f"final error {r.final_error:.3e}, rounds to {spec.target:g}: {reached}")
    print(f"wrote {len(rows)} runs to {out}")
    return 0


def cmd_certify(args) -> int:
    lambda2 = None
    if args.n is not None:
        lambda2 = analyze(ring_with_random_chords(args.n, args.chord_probability, args.graph_seed)).lambda2
    try:
        cert = derive_parameters(args.m_f, args.M_f, args.delta, args.mode, lambda2=lambda2, B=args.B)
    except CertificateInfeasibleError as exc:
        print(f"certificate infeasible: {exc}", file=sys.stderr)
        return 1
    rows = cert.as_rows()
    for q in args.q:
        rows.append((f"lambda1_q{q:g}", cert.partial_rate(q)))
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {value}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["quantity", "value"])
            for key, value in rows:
                w.writerow([key, f"{value:.17g}" if isinstance(value, float) else value])
    else:
        print()
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for key, value in rows:
            w.writerow([key, f"{value:.17g}" if isinstance(value, float) else value])
    return 0


def cmd_gen_data(args) -> int:
    path = Path(args.out)
    if args.kind == "quadratic":
        data = random_centers(args.n, args.d, args.seed)
        with path.open("w") as fh:
            write_centers(data, fh)
    else:
        data = synthetic_logistic_dataset(args.samples, args.d, args.seed)
        with path.open("w") as fh:
            write_libsvm(data, fh)
    print(f"wrote {path}")
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipdopt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec or preset")
    r.add_argument("spec", nargs="?", help="spec file (key = value lines)")
    r.add_argument("--preset", choices=sorted(PRESETS), help="start from a preset; a spec file overrides it")
    r.add_argument("--out", help="output directory (overrides the spec's 'out')")
    r.add_argument("--seed", type=int, help="run a single activation seed")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("certify", help="derive parameters and the rate certificate")
    c.add_argument("--m-f", dest="m_f", type=float, required=True)
    c.add_argument("--M-f", dest="M_f", type=float, required=True)
    c.add_argument("--delta", type=_unit_interval, default=0.9)
    c.add_argument("--mode", choices=("corollary", "theorem"), default="corollary")
    c.add_argument("--B", type=_positive_int, help="certify this B instead of the minimum")
    c.add_argument("--n", type=_positive_int, help="ring-with-chords graph size for lambda2(P)")
    c.add_argument("--chord-probability", type=float, default=0.2)
    c.add_argument("--graph-seed", type=int, default=0)
    c.add_argument("--q", type=_floats, default=[], help="comma-separated activation probabilities")
    c.add_argument("--csv", help="write the CSV form here instead of stdout")
    c.set_defaults(func=cmd_certify)

    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("kind", choices=("quadratic", "synthetic_logistic"))
    g.add_argument("--n", type=_positive_int, default=10, help="agents (quadratic centers)")
    g.add_argument("--d", type=_positive_int, default=22)
    g.add_argument("--samples", type=_positive_int, default=5000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IPDError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
