#!/usr/bin/env python3
"""Validate golden wire vectors against the shared protocol schema."""
import json
import sys
from pathlib import Path

import jsonschema


def main(schema_path, golden_dir):
    schema = json.loads(Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    failures = 0
    files = sorted(Path(golden_dir).glob("*.json"))
    for f in files:
        case = json.loads(f.read_text())
        for part in ("request", "response"):
            name = case.get(part + "_schema")
            if name is None:
                continue
            sub = {"$ref": "#/$defs/" + name, "$defs": schema["$defs"]}
            errors = list(jsonschema.Draft202012Validator(sub).iter_errors(case[part]))
            for e in errors:
                print(f"{f.name}: {part}: {e.message}")
            failures += len(errors)
    print(f"{len(files)} golden vectors, {failures} schema violations")
    return 1 if failures or not files else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
