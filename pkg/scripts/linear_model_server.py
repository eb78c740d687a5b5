#!/usr/bin/env python3
"""
Reference external model: serves a linear index model over the line protocol.

Usage:
    python scripts/linear_model_server.py --coefficients model.json [--link identity|probit|logit]

The coefficients file holds either a saved built-in model (``to_dict()``
output) or a bare ``{"coef": [...], "intercept": ...}`` record.
"""
import argparse
import json
import sys

import numpy as np
from scipy.special import expit, ndtr

LINKS = {"identity": None, "probit": ndtr, "logit": expit}


def load_coefficients(path: str):
    with open(path, "r", encoding="utf-8") as f:
        record = json.load(f)
    params = record.get("parameters", record)
    return np.asarray(params["coef"], dtype=float), float(params.get("intercept", 0.0))


def serve(
    coef: np.ndarray,
    intercept: float,
    link: str,
    crash_after: int,
    garble_batch: int = 0,
    stdin=sys.stdin,
    stdout=sys.stdout,
) -> int:
    hello = stdin.readline().split()
    if len(hello) != 4 or hello[0] != "HELLO" or hello[1] != "1":
        stdout.write("ERR expected 'HELLO 1 <task> <q>'\n")
        stdout.flush()
        return 2
    task, q = hello[2], int(hello[3])
    if q != coef.size:
        stdout.write(f"ERR model has {coef.size} features, engine asked for {q}\n")
        stdout.flush()
        return 2
    transform = LINKS[link]
    stdout.write("OK probability\n" if task == "binary_classification" and transform else "OK score\n")
    stdout.flush()

    batches = 0
    for header in stdin:
        parts = header.split()
        if not parts:
            continue
        if parts[0] != "PREDICT" or len(parts) != 2:
            stdout.write(f"ERR unknown request '{header.strip()}'\n")
            stdout.flush()
            continue
        m = int(parts[1])
        lines = [stdin.readline() for _ in range(m)]
        batches += 1
        if crash_after and batches > crash_after:
            sys.stderr.write(f"linear_model_server: crashing on batch {batches} as requested\n")
            sys.stderr.flush()
            return 3
        try:
            rows = np.array([[float(v) for v in line.split(",")] for line in lines], dtype=float).reshape(m, -1)
        except ValueError as e:
            stdout.write(f"ERR unparseable row: {e}\n")
            stdout.flush()
            continue
        if rows.shape[1] != q or not np.all(np.isfinite(rows)):
            stdout.write("ERR rows must hold q finite numbers\n")
            stdout.flush()
            continue
        eta = (rows * coef).sum(axis=1) + intercept
        values = transform(eta) if transform and task == "binary_classification" else eta
        replies = [format(v, ".17g") for v in values]
        if batches == garble_batch and replies:
            replies[0] = "not-a-number"
        stdout.write("".join(reply + "\n" for reply in replies))
        stdout.flush()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve a linear model over the external model protocol")
    parser.add_argument("--coefficients", required=True, help="JSON file with coef and intercept")
    parser.add_argument("--link", choices=sorted(LINKS), default="identity")
    parser.add_argument("--crash-after", type=int, default=0, help="exit abruptly after this many batches")
    parser.add_argument("--garble-batch", type=int, default=0, help="corrupt the first value of this batch")
    args = parser.parse_args(argv)
    coef, intercept = load_coefficients(args.coefficients)
    return serve(coef, intercept, args.link, args.crash_after, args.garble_batch)


if __name__ == "__main__":
    sys.exit(main())
