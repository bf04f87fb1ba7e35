"""Runs every screen subcommand on the sample configs and validates report.json against the schema.

usage: report_schema_smoke.py SCREEN_BINARY SAMPLES_DIR SCHEMA OUT_DIR
"""

import csv
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema

RUNS = [
    (["certify"], "certify_bilinear_perturbed.json"),
    (["certify"], "certify_violated_1d.json"),
    (["solve"], "solve_square.json"),
    (["oracle"], "oracle_tiny.json"),
    (["transform"], "transform_quadratic.json"),
    (["experiment", "rochet-chone"], "rochet_chone_unit.json"),
    (["experiment", "exclusion"], "exclusion_interval.json"),
    (["experiment", "stability"], "stability_constant.json"),
    (["experiment", "welfare"], "welfare_identity.json"),
]

CSV_HEADERS = {
    "agents.csv": ["x0", "x1", "weight", "u", "q0", "q1", "y0", "y1", "price", "excluded"],
    "production.csv": ["y0", "y1", "mass", "agents"],
    "stability.csv": ["level", "sup_gap", "bl_distance", "agreement", "L", "mass", "atoms"],
    "welfare.csv": ["lambda", "W", "profit", "welfare"],
}


def main():
    screen, samples, schema_path, out = (pathlib.Path(a) for a in sys.argv[1:5])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    shutil.rmtree(out, ignore_errors=True)
    failures = 0
    for args, config in RUNS:
        target = out / pathlib.Path(config).stem
        cmd = [str(screen), *args, "--config", str(samples / config), "--out", str(target), "--seed", "3"]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"FAIL {config}: exit {proc.returncode}\n{proc.stderr}")
            failures += 1
            continue
        report = json.loads((target / "report.json").read_text())
        errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
        for e in errors:
            print(f"FAIL {config}: {'/'.join(map(str, e.path))}: {e.message}")
        failures += len(errors)
        for name in report["files"]:
            path = target / name
            if not path.is_file():
                print(f"FAIL {config}: listed file {name} is missing")
                failures += 1
            elif name in CSV_HEADERS and config != "exclusion_interval.json":
                header = next(csv.reader(path.open()))
                if header[: len(CSV_HEADERS[name])] != CSV_HEADERS[name]:
                    print(f"FAIL {config}: {name} header {header}")
                    failures += 1
        # the same seed reproduces the report exactly
        again = out / (target.name + "_again")
        subprocess.run(cmd[:-4] + ["--out", str(again), "--seed", "3"], check=True, capture_output=True)
        if (again / "report.json").read_text() != (target / "report.json").read_text():
            print(f"FAIL {config}: report differs between identical runs")
            failures += 1
        print(f"{'ok  ' if not errors else 'FAIL'} {config}")
    bad = subprocess.run([str(screen), "solve", "--config", str(schema_path), "--out", str(out / "bad")],
                         capture_output=True, text=True)
    if bad.returncode != 2:
        print(f"FAIL malformed config: expected exit 2, got {bad.returncode}")
        failures += 1
    refused = subprocess.run([str(screen), "solve", "--config", str(samples / "solve_violated_1d.json"),
                              "--out", str(out / "refused")], capture_output=True, text=True)
    if refused.returncode != 3:
        print(f"FAIL violated model: expected exit 3, got {refused.returncode}")
        failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
