#!/usr/bin/env python3
"""Recompute aggregate reports from the raw evaluation records and compare."""
import csv
import json
import math
import subprocess
import sys
import tempfile
from collections import defaultdict
from pathlib import Path

TOL = 1e-12
MEDIAN = {"pll", "pppl"}


def recompute(evaluate_dir):
    groups = defaultdict(list)
    for path in sorted(Path(evaluate_dir).rglob("*.jsonl")):
        for line in path.read_text().splitlines():
            rec = json.loads(line)
            if rec.get("error"):
                continue
            for metric, value in rec["metrics"].items():
                for split in (rec["split"], "overall"):
                    groups[(rec["backend"], rec["bucket"], split, rec["view"], metric)].append(value)
    out = {}
    for key, values in groups.items():
        values.sort()
        if key[4] in MEDIAN:
            out[key] = (values[(len(values) - 1) // 2], len(values))
        else:
            out[key] = (math.fsum(values) / len(values), len(values))
    return out


def close(a, b):
    return abs(a - b) <= TOL * max(1.0, abs(a), abs(b))


def main(cli, config):
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([cli, "--config", config, "--out-dir", tmp, "run"], check=True,
                       stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        expected = recompute(Path(tmp) / "evaluate")
        got = {}
        with open(Path(tmp) / "aggregate" / "reports.csv") as f:
            for row in csv.DictReader(f):
                key = (row["backend"], row["bucket"], row["split"], row["view"], row["metric"])
                got[key] = (float(row["value"]), int(row["n"]))
        bad = 0
        for key in sorted(set(expected) | set(got)):
            if key not in got or key not in expected:
                print(f"row present on one side only: {key}")
                bad += 1
            elif not close(expected[key][0], got[key][0]) or expected[key][1] != got[key][1]:
                print(f"mismatch {key}: recomputed {expected[key]} reported {got[key]}")
                bad += 1

        cells = 0
        for table in sorted((Path(tmp) / "report" / "tables").glob("*.csv")):
            with open(table) as f:
                rows = list(csv.reader(f))
            header = rows[0]
            view_metric_split = table.stem
            for split in ("unchanged", "updated", "new", "deleted", "overall"):
                if view_metric_split.endswith("_" + split):
                    stem = view_metric_split[: -len(split) - 1]
                    break
            view, metric = next((v, stem[len(v) + 1:]) for v in ("single_token", "multi_token", "mlm_score")
                                if stem.startswith(v + "_"))
            for r in rows[1:]:
                for bucket, cell in zip(header[1:], r[1:]):
                    key = (r[0], bucket, split, view, metric)
                    if cell == "":
                        if key in got:
                            print(f"table {table.name} leaves {key} empty")
                            bad += 1
                        continue
                    cells += 1
                    if key not in got or not close(float(cell), got[key][0]):
                        print(f"table {table.name} cell {key} = {cell} disagrees with reports.csv")
                        bad += 1
        print(f"{len(expected)} aggregate rows, {cells} table cells checked, {bad} problems")
        return 1 if bad or not expected else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
