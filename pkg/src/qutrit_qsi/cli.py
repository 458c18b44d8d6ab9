"""
Command-line front end.

    qutrit-qsi map 2,0 1,0 --iters 2
    qutrit-qsi heatmap --mode rotated --iters 3 --out rotated.csv
    qutrit-qsi identify --set states.txt --hidden 2 --iters 3 --mode sampled --seed 7
    qutrit-qsi campaign --k 2 3 4 5 6 --trials 5000 --mode ideal --seed 1
    qutrit-qsi resources 1,0 1,0 --iters 2 --confidence 0.99 --simulate 1000000

Exit codes: 0 success, 2 usage or input error, 3 algorithm failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import re
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import CoeffPair, QutritError
from .ensemble import estimate_resources, simulate_ensemble
from .montecarlo import RNG_ALGORITHM, CampaignConfig, run_campaign, sweep_m
from .protocol import Quantity, ScanMode, ZeroCoefficient, grid_scan, iterate_map
from .qsi import CandidateSet, DecisionMode, identify

EXIT_USAGE = 2
EXIT_ALGORITHM = 3


class InputError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits: round-trips a double."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x) + 0.0:.17g}"  # + 0.0 turns -0.0 into 0.0


def parse_complex(text: str) -> complex:
    """`re,im`, `rho@phi` (phi in radians) or a bare real number."""
    s = text.strip()
    try:
        if "@" in s:
            rho, phi = (float(v) for v in s.split("@"))
            return rho * complex(math.cos(phi), math.sin(phi))
        if "," in s:
            re_, im = (float(v) for v in s.split(","))
            return complex(re_, im)
        return complex(float(s), 0.0)
    except ValueError:
        raise InputError(f"cannot parse complex literal {text!r}") from None


def _coeff_pair(a: str, b: str) -> CoeffPair:
    try:
        return CoeffPair(parse_complex(a), parse_complex(b))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def read_candidate_set(path: str) -> CandidateSet:
    """One state per line, `z1 z2` as complex literals; `#` starts a comment."""
    coeffs = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 coefficients, got {len(tokens)}")
            try:
                coeffs.append(_coeff_pair(*tokens))
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    if len(coeffs) < 2:
        raise InputError(f"{path}: need at least 2 candidate states, found {len(coeffs)}")
    return CandidateSet.from_coeffs(coeffs)


def parse_int_range(text: str) -> list[int]:
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise InputError(f"empty range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse range {text!r}; use a..b or a,b,c") from None


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


# ---- output plumbing ------------------------------------------------------

def manifest(subcommand: str, config: dict, seed: Optional[int]) -> dict:
    return {
        "tool_version": __version__,
        "subcommand": subcommand,
        "full_config": config,
        "seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


class Output:
    """Payload goes to --out (or stdout); the manifest to a sidecar (or stderr)."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self.buf = io.StringIO()

    def write(self, text: str):
        self.buf.write(text)

    def finish(self, man: dict):
        payload = self.buf.getvalue()
        if self.path is None:
            sys.stdout.write(payload)
            sys.stdout.flush()
            print("# manifest " + json.dumps(man, sort_keys=True), file=sys.stderr)
            return
        with open(self.path, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
        with open(self.path + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")


def emit_table(out: Output, fmt_name: str, header: Sequence[str], rows: Sequence[Sequence]):
    if fmt_name == "jsonl":
        for row in rows:
            out.write(json.dumps(dict(zip(header, row))) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


# ---- subcommands ----------------------------------------------------------

def cmd_map(args) -> int:
    c = _coeff_pair(args.z1, args.z2)
    if args.iters < 0:
        raise InputError("--iters must be >= 0")
    try:
        traj = iterate_map(c, args.iters)
    except ZeroCoefficient as exc:
        print(f"error: map undefined at step {exc.step + 1} of {args.iters}: {exc}",
              file=sys.stderr)
        return EXIT_USAGE
    except OverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rows, cum = [], 1.0
    for n, pt in enumerate(traj.points):
        step = traj.per_step_survival[n - 1] if n else None
        if step is not None:
            cum *= step
        rows.append([n, pt.z1.real, pt.z1.imag, pt.z2.real, pt.z2.imag, step, cum])
    out = Output(args.out)
    emit_table(out, args.format,
               ["n", "re_f1", "im_f1", "re_f2", "im_f2", "step_survival", "cumulative_survival"],
               rows)
    out.finish(manifest("map", {"z1": args.z1, "z2": args.z2, "iters": args.iters,
                                "format": args.format}, None))
    return 0


def _parse_region(text: Optional[str]):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse --range {text!r}") from None
    if len(vals) != 4 or not all(math.isfinite(v) for v in vals) \
            or vals[1] <= vals[0] or vals[3] <= vals[2]:
        raise InputError(f"--range needs x0,x1,y0,y1 with x0 < x1 and y0 < y1, got {text!r}")
    return tuple(vals)


def cmd_heatmap(args) -> int:
    region = _parse_region(args.range)
    if args.resolution < 2:
        raise InputError("--resolution must be >= 2")
    if args.iters < 0:
        raise InputError("--iters must be >= 0")
    scan = grid_scan(region, args.resolution, args.iters, ScanMode(args.mode),
                     Quantity(args.quantity))
    xname, yname = scan.axis_names
    out = Output(args.out)
    if args.format == "jsonl":
        for i, y in enumerate(scan.y):
            for j, x in enumerate(scan.x):
                out.write(json.dumps({xname: float(x), yname: float(y),
                                      "value": float(scan.values[i, j])}) + "\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"{yname}\\{xname}"] + [fmt(x) for x in scan.x])
        for y, row in zip(scan.y, scan.values):
            w.writerow([fmt(y)] + [fmt(v) for v in row])
    config = {"mode": args.mode, "range": list(region) if region else None,
              "resolution": args.resolution, "iters": args.iters,
              "quantity": args.quantity, "format": args.format, "sentinel": -1}
    out.finish(manifest("heatmap", config, None))
    return 0


def _transcript_dict(res) -> dict:
    return {
        "identified_index": res.identified_index,
        "loops": res.loops,
        "success_probability": res.success_probability,
        "applied_ops": [str(op) for op in res.applied_ops],
        "transcript": [
            {
                "loop": r.loop,
                "theta_applied": r.theta_applied,
                "u2_applied": r.u2_applied,
                "r_applied": r.r_applied,
                "m_used": r.m_used,
                "p_plus": r.branch_probs[0],
                "p_minus": r.branch_probs[1],
                "branch_taken": r.branch_taken.value,
                "set_before": r.set_sizes[0],
                "set_after": r.set_sizes[1],
                "proportional_after_u2": (None if r.proportional_after_u2 is None
                                          else [list(p) for p in r.proportional_after_u2]),
            }
            for r in res.transcript
        ],
    }


def cmd_identify(args) -> int:
    cset = read_candidate_set(args.set)
    mode = DecisionMode(args.mode)
    if args.iters < 0:
        raise InputError("--iters must be >= 0")
    seed = args.seed if args.seed is not None else _fresh_seed()
    if args.hidden is None and mode is not DecisionMode.EXPECTED:
        raise InputError("--hidden is required unless --mode expected")
    if args.hidden is not None and args.hidden not in cset.indices:
        raise InputError(f"--hidden {args.hidden} not in 1..{len(cset)}")

    hidden_list = [args.hidden] if args.hidden is not None else list(cset.indices)
    try:
        results = [identify(cset, w, args.iters, mode, seed) for w in hidden_list]
    except QutritError as exc:
        print(f"error: identification failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM

    out = Output(args.out)
    if args.format == "json":
        records = []
        for w, res in zip(hidden_list, results):
            records.append({"hidden": w, **_transcript_dict(res)})
        doc = records[0] if len(records) == 1 else {
            "per_hidden": records,
            "mean_success_probability": float(np.mean([r.success_probability for r in results])),
        }
        out.write(json.dumps(doc, indent=2) + "\n")
    else:
        for w, res in zip(hidden_list, results):
            out.write(f"hidden {w}: identified index {res.identified_index}, loops {res.loops}\n")
            if res.success_probability is not None:
                out.write(f"  success probability {fmt(res.success_probability)}\n")
            for r in res.transcript:
                theta = "-" if r.theta_applied is None else fmt(r.theta_applied)
                out.write(f"  loop {r.loop}: theta {theta}, u2 x{r.u2_applied}, "
                          f"R {'yes' if r.r_applied else 'no'}, M {r.m_used}, "
                          f"p+ {fmt(r.branch_probs[0])}, p- {fmt(r.branch_probs[1])}, "
                          f"branch {r.branch_taken.value}, set {r.set_sizes[0]}->{r.set_sizes[1]}\n")
        if len(results) > 1:
            avg = float(np.mean([r.success_probability for r in results]))
            out.write(f"mean success probability over hidden indices {fmt(avg)}\n")
    config = {"set": os.path.abspath(args.set), "hidden": args.hidden, "iters": args.iters,
              "mode": args.mode, "format": args.format}
    out.finish(manifest("identify", config, seed))
    return 0


def cmd_campaign(args) -> int:
    seed = args.seed if args.seed is not None else _fresh_seed()
    if args.seed is None:
        print(f"# seed {seed}", file=sys.stderr)
    mode = DecisionMode(args.mode)
    m_values = parse_int_range(args.sweep_m) if args.sweep_m else [args.iters]
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    rows = []
    try:
        for k in args.k:
            cfg = CampaignConfig(k=k, m=m_values[0], trials=args.trials, seed=seed, mode=mode)
            if args.sweep_m:
                results = sweep_m(cfg, m_values, workers=threads)
            else:
                results = [(cfg.m, run_campaign(cfg, workers=threads))]
            for m, st in results:
                rows.append([k, m, mode.value, args.trials, st.success_rate, st.mean_loops,
                             st.std_loops, st.failures, st.completed,
                             st.mean_success_probability])
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Output(args.out)
    emit_table(out, args.format,
               ["k", "m", "mode", "trials", "success_rate", "mean_loops", "std_loops",
                "failures", "completed", "mean_success_probability"], rows)
    config = {"k": args.k, "iters": args.iters, "sweep_m": args.sweep_m, "trials": args.trials,
              "mode": args.mode, "format": args.format,
              "per_m_seed": "derived_seed(seed, m)" if args.sweep_m else "seed"}
    out.finish(manifest("campaign", config, seed))
    return 0


def cmd_resources(args) -> int:
    c = _coeff_pair(args.z1, args.z2)
    if args.iters < 0:
        raise InputError("--iters must be >= 0")
    if not 0 < args.confidence < 1:
        raise InputError("--confidence must be in (0, 1)")
    try:
        est = estimate_resources(c, args.iters, args.confidence)
    except (ZeroCoefficient, OverflowError) as exc:
        print(f"error: trajectory undefined: {exc}", file=sys.stderr)
        return EXIT_USAGE
    record = {
        "m": est.m,
        "per_step_probs": list(est.per_step_probs),
        "cumulative_survival": est.cumulative_survival,
        "expected_yield_fraction": est.expected_yield_fraction,
        "required_size_for_confidence": est.required_size_for_confidence,
        "confidence": est.confidence,
        "required_size_method": est.method,
        "required_size_note": "smallest N with P(>=1 final survivor) >= confidence "
                              "under independent groups of 4",
    }
    seed = None
    if args.simulate is not None:
        if args.simulate < 0:
            raise InputError("--simulate must be >= 0")
        seed = args.seed if args.seed is not None else _fresh_seed()
        run = simulate_ensemble(c, args.iters, args.simulate, seed)
        expected = args.simulate * est.expected_yield_fraction
        record.update({
            "simulated_initial_size": args.simulate,
            "simulated_attempts": [r.attempts for r in run.per_iteration],
            "simulated_survivors": [r.survivors for r in run.per_iteration],
            "simulated_final_survivors": run.final_survivors,
            "expected_final_survivors": expected,
        })
    out = Output(args.out)
    if args.format == "jsonl":
        out.write(json.dumps(record) + "\n")
    else:
        for key, val in record.items():
            if isinstance(val, list):
                val = " ".join(fmt(v) for v in val)
            elif not isinstance(val, str):
                val = fmt(val)
            out.write(f"{key}: {val}\n")
    config = {"z1": args.z1, "z2": args.z2, "iters": args.iters,
              "confidence": args.confidence, "simulate": args.simulate, "format": args.format}
    out.finish(manifest("resources", config, seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qutrit-qsi", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="iterate the coefficient map")
    p.add_argument("z1")
    p.add_argument("z2")
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("heatmap", help="p1 or survival landscape on a grid")
    p.add_argument("--mode", choices=["direct", "rotated"], default="direct")
    p.add_argument("--range", help="x0,x1,y0,y1 (use --range=... for negative values)")
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--quantity", choices=["p1", "survival"], default="p1")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("identify", help="identify a hidden state in a candidate-set file")
    p.add_argument("--set", required=True)
    p.add_argument("--hidden", type=int, help="1-based index of the unknown state")
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--mode", choices=[m.value for m in DecisionMode], default="ideal")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("campaign", help="Monte Carlo identification statistics")
    p.add_argument("--k", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    p.add_argument("--iters", type=int, default=0)
    p.add_argument("--sweep-m", help="a..b or a,b,c; overrides --iters")
    p.add_argument("--trials", type=int, default=20000)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=[m.value for m in DecisionMode], default="ideal")
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("resources", help="survival bookkeeping and ensemble size")
    p.add_argument("z1")
    p.add_argument("z2")
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--simulate", type=int, metavar="N")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["text", "jsonl"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_resources)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
