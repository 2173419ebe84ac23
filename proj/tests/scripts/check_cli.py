#!/usr/bin/env python3
"""Exit codes of the command-line tool (0 ok, 2 config, 3 stage, 4 transport) and
the standalone module forms."""
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path


def run(cli, *args):
    return subprocess.run([cli, *args], stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)


def main(cli, fixtures):
    fixtures = Path(fixtures)
    base = (fixtures / "config.ini").read_text()
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for name in ("templates.csv", "mock_2021-Q2.json", "mock_2021-Q3.json", "dump_slice.jsonl"):
            shutil.copy(fixtures / name, tmp / name)

        def config(name, text):
            (tmp / name).write_text(text)
            return str(tmp / name)

        (tmp / "bad_facts.tsv").write_text("Q1\tP54\n")
        cases = [
            ("full run", 0, ["--config", str(fixtures / "config.ini"), "--out-dir", str(tmp / "ok"), "run"]),
            ("resumed stage verb", 0, ["--config", str(fixtures / "config.ini"), "--out-dir", str(tmp / "ok"), "report"]),
            ("missing config", 2, ["--config", str(tmp / "absent.ini"), "--out-dir", str(tmp / "o2"), "run"]),
            ("unknown key", 2, ["--config", config("unknown.ini", base + "\n[report]\ncolour = red\n"),
                                "--out-dir", str(tmp / "o3"), "run"]),
            ("bad usage", 2, ["--bogus-flag"]),
            ("stage failure", 3, ["--config", config("facts.ini", base.replace("dump = dump_slice.jsonl",
                                                                              "facts = bad_facts.tsv")),
                                  "--out-dir", str(tmp / "o4"), "run"]),
            ("unreachable backend", 4, ["--config", config("http.ini", base.replace(
                "[report]", "2021-Q4 = http://127.0.0.1:1\n\n[report]")), "--out-dir", str(tmp / "o5"), "run"]),
        ]
        for label, want, args in cases:
            r = run(cli, *args)
            ok = r.returncode == want
            failures += not ok
            print(f"{'ok  ' if ok else 'FAIL'} {label}: exit {r.returncode} (want {want})")
            if not ok:
                print(r.stderr)
            if label == "stage failure" and "replay:" not in r.stderr:
                print("FAIL stage failure: no replay hint on stderr")
                failures += 1

        # standalone module forms reproduce the pipeline's intermediate files
        ok_dir = tmp / "ok"
        steps = [
            ["ingest", "--dump", str(fixtures / "dump_slice.jsonl"), "--relations", str(fixtures / "templates.csv"),
             "--out", str(tmp / "sa_facts.tsv")],
            ["snapshot", "--facts", str(tmp / "sa_facts.tsv"), "--from", "2020-10-01", "--to", "2021-12-31",
             "--granularity", "quarter", "--out", str(tmp / "sa_snap")],
            ["split", "--snapshots", str(tmp / "sa_snap"), "--out", str(tmp / "sa_split")],
            ["evaluate", "--queries", str(ok_dir / "render"), "--backend", "mock:" + str(fixtures / "mock_2021-Q2.json"),
             "--name", "2021-Q2", "--view", "pll", "--M", "5", "--topk", "100", "--out", str(tmp / "sa_eval")],
        ]
        for args in steps:
            r = run(cli, *args)
            if r.returncode != 0:
                print(f"FAIL standalone {args[0]}: exit {r.returncode}\n{r.stderr}")
                failures += 1
        pairs = [(tmp / "sa_facts.tsv", ok_dir / "ingest" / "facts.tsv")]
        for sub, ref in (("sa_snap", "snapshot"), ("sa_split", "split")):
            for f in sorted((ok_dir / ref).iterdir()):
                pairs.append((tmp / sub / f.name, f))
        for f in sorted((ok_dir / "evaluate" / "2021-Q2" / "mlm_score").iterdir()):
            pairs.append((tmp / "sa_eval" / f.name, f))
        same = sum(a.exists() and a.read_bytes() == b.read_bytes() for a, b in pairs)
        ok = same == len(pairs)
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} standalone forms: {same}/{len(pairs)} files match the pipeline run")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
