#!/usr/bin/env python3
"""Runs every CLI subcommand at a small size and checks the reports.

usage: check_cli.py <lpnrl_cli> <report.schema.json>
"""

import json
import os
import subprocess
import sys
import tempfile

import jsonschema

SMALL = {
    "lpn solve": ["--n", "6"],
    "batch verify": ["--batches", "2000"],
    "mdp simulate": ["--episodes", "200", "--H", "2"],
    "pipeline run": ["--contrast_pairs", "300", "--erm_episodes", "50"],
    "rl fqi": ["--H", "2"],
    "rl ppe": ["--oracle_episodes", "100"],
    "rl bandit": ["--N", "500", "--eval_contexts", "200"],
    "oraclelb audit": ["--H", "2", "--N", "4", "--eps", "0.5"],
    "regress demo": ["--samples", "500", "--N", "64"],
}

TIMING_KEYS = {"wall_seconds", "stage_seconds"}


def run(cli, args):
    return subprocess.run([cli, *args], capture_output=True, text=True, timeout=600)


def report(cli, name, seed=7, trials=2, workers=1, extra=()):
    proc = run(cli, ["--seed", str(seed), "--trials", str(trials), "--workers", str(workers),
                     *name.split(), *SMALL[name], *extra])
    if proc.returncode != 0:
        raise AssertionError(f"{name}: exit {proc.returncode}: {proc.stderr}")
    return json.loads(proc.stdout)


def without_timing(aggregate):
    return {k: v for k, v in aggregate.items() if k not in TIMING_KEYS}


def main():
    cli, schema_path = sys.argv[1], sys.argv[2]
    with open(schema_path) as f:
        validator = jsonschema.Draft202012Validator(json.load(f))
    failures = []

    def check(label, ok, detail=""):
        print(f"{'ok  ' if ok else 'FAIL'} {label}{': ' + detail if detail and not ok else ''}")
        if not ok:
            failures.append(label)

    for name in SMALL:
        try:
            first = report(cli, name)
        except AssertionError as e:
            check(f"{name} runs", False, str(e))
            continue
        errors = sorted(validator.iter_errors(first), key=lambda e: list(e.path))
        check(f"{name} matches schema", not errors, "; ".join(e.message for e in errors[:3]))
        again = report(cli, name)
        check(f"{name} same seed gives identical trials", first["trials"] == again["trials"])
        parallel = report(cli, name, trials=3, workers=3)
        serial = report(cli, name, trials=3, workers=1)
        check(f"{name} workers do not change results",
              parallel["trials"] == serial["trials"]
              and without_timing(parallel["aggregate"]) == without_timing(serial["aggregate"]))
        other = report(cli, name, seed=8)
        check(f"{name} echoes params", set(first["config"]["params"]) == set(other["config"]["params"]))

    proc = run(cli, ["--seed", "1", "nosuch"])
    check("unknown subcommand exits 2", proc.returncode == 2, f"exit {proc.returncode}")
    proc = run(cli, ["--seed", "1", "rl", "nosuch"])
    check("unknown action exits 2", proc.returncode == 2, f"exit {proc.returncode}")
    proc = run(cli, ["--seed", "1", "rl", "fqi", "--bogus", "1"])
    check("unknown parameter exits 2", proc.returncode == 2, f"exit {proc.returncode}")
    proc = run(cli, ["--seed", "1", "rl", "fqi", "--H", "many"])
    check("malformed parameter exits 2", proc.returncode == 2, f"exit {proc.returncode}")
    proc = run(cli, ["--seed", "1", "lpn", "solve", "--delta", "0.9"])
    check("out-of-range parameter exits 2", proc.returncode == 2, f"exit {proc.returncode}")
    proc = run(cli, ["lpn", "solve"])
    check("missing seed exits 2", proc.returncode == 2, f"exit {proc.returncode}")

    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "report.json")
        traj = os.path.join(tmp, "traj.jsonl")
        proc = run(cli, ["--seed", "3", "--out", out, "mdp", "simulate", "--episodes", "20", "--H", "2",
                         "--N", "16", "--trajectories", traj, "--trajectory_limit", "5"])
        check("report written to --out", proc.returncode == 0 and os.path.exists(out), proc.stderr)
        lines = open(traj).read().splitlines() if os.path.exists(traj) else []
        check("trajectory file has one JSON line per episode", len(lines) == 5, f"{len(lines)} lines")
        if lines:
            rec = json.loads(lines[0])
            x = rec["emissions"][-1]
            hexdigits = set("0123456789abcdef:")
            check("trajectory emissions are hex",
                  set(x["row_u"]) <= hexdigits and set(x["enc_u"]) <= hexdigits and set(x["row_y"]) <= set("01"))
            check("trajectory has hidden states and actions", len(rec["states"]) == 2 and len(rec["actions"]) == 2)

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
