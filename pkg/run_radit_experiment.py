#!/usr/bin/env python3
"""
Desk-scale fine-tuning experiments

Runs RALT (generator), LSR (retriever) and RALT followed by LSR on the
synthetic corpora in rag_engine.synthetic and prints a markdown report.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

# Ensure repo root is on path
_REPO_ROOT = Path(__file__).resolve().parent
if str(_REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(_REPO_ROOT))

from rag_engine.experiments import run_lsr_experiment, run_radit_experiment, run_ralt_experiment


def main() -> int:
    p = argparse.ArgumentParser(description="Run the desk-scale RALT / LSR experiments.")
    p.add_argument("--ralt-seeds", type=int, nargs="*", default=[0, 1])
    p.add_argument("--lsr-seeds", type=int, nargs="*", default=[0, 1, 2])
    p.add_argument("--radit-seed", type=int, default=0)
    p.add_argument("--json", default="", help="Also write all reports to this JSON file.")
    p.add_argument("--log-level", default="WARNING")
    args = p.parse_args()
    logging.basicConfig(level=getattr(logging, args.log_level.upper()), stream=sys.stderr)

    lines = ["# Desk-scale fine-tuning experiments", ""]

    ralt = [run_ralt_experiment(s) for s in args.ralt_seeds]
    lines += ["## RALT (held-out exact match)", "", "| seed | before | after | gain |", "|---|---|---|---|"]
    for r in ralt:
        lines.append(f"| {r.seed} | {r.em_before:.3f} | {r.em_after:.3f} | {r.gain:+.3f} |")
    if ralt:
        mean_gain = sum(r.gain for r in ralt) / len(ralt)
        lines += ["", f"Mean gain: {mean_gain:+.3f}", ""]

    lsr = [run_lsr_experiment(s) for s in args.lsr_seeds]
    lines += ["## LSR (mean reciprocal rank of the answer chunk)", "", "| seed | before | after | gain |", "|---|---|---|---|"]
    for r in lsr:
        lines.append(f"| {r.seed} | {r.mrr_before:.3f} | {r.mrr_after:.3f} | {r.gain:+.3f} |")
    if lsr:
        mean_gain = sum(r.gain for r in lsr) / len(lsr)
        lines += ["", f"Mean gain: {mean_gain:+.3f}", ""]

    radit = run_radit_experiment(args.radit_seed)
    lines += [
        "## RALT then LSR",
        "",
        f"- exact match: {radit.em_before:.3f} -> {radit.em_after_ralt:.3f} (RALT) -> {radit.em_after_lsr:.3f} (LSR)",
        f"- train MRR: {radit.mrr_before_lsr:.3f} -> {radit.mrr_after_lsr:.3f}",
    ]
    print("\n".join(lines))

    if args.json:
        payload = {
            "ralt": [r.to_dict() for r in ralt],
            "lsr": [r.to_dict() for r in lsr],
            "radit": radit.to_dict(),
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
