#!/usr/bin/env python3
"""Validate explanation report JSON files against the shipped schema.

usage: validate_reports.py SCHEMA FILE_OR_DIR...
Exit status 0 when every file validates, 1 otherwise.
"""
import json
import pathlib
import sys

import jsonschema


def main(argv):
    if len(argv) < 3:
        print(__doc__, file=sys.stderr)
        return 2
    schema = json.loads(pathlib.Path(argv[1]).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    files = []
    for arg in argv[2:]:
        p = pathlib.Path(arg)
        files.extend(sorted(p.glob("explanations_*.json")) if p.is_dir() else [p])
    if not files:
        print("no report files found", file=sys.stderr)
        return 1
    bad = 0
    for f in files:
        errors = sorted(validator.iter_errors(json.loads(f.read_text())), key=lambda e: list(e.path))
        for e in errors:
            print(f"{f}: {'/'.join(map(str, e.path))}: {e.message}")
        bad += bool(errors)
    print(f"{len(files) - bad}/{len(files)} files valid")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
