#!/usr/bin/env python3
"""Validates checked-in golden files against docs/schemas."""

import json
import pathlib
import sys

import jsonschema


def main():
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".").resolve()
    schemas = {p.name.split(".")[0]: json.loads(p.read_text())
               for p in (root / "docs" / "schemas").glob("*.schema.json")}
    checks = []
    for p in sorted((root / "tests" / "golden" / "protocol").glob("*_request.json")):
        checks.append(("score_request", p))
    for p in sorted((root / "tests" / "golden" / "protocol").glob("*_response.json")):
        checks.append(("score_response", p))
    for p in sorted((root / "tests" / "golden" / "report").glob("*.json")):
        checks.append(("report", p))
    failures = 0
    for schema, path in checks:
        try:
            jsonschema.validate(json.loads(path.read_text()), schemas[schema])
            print(f"ok   {schema:15} {path.relative_to(root)}")
        except jsonschema.ValidationError as e:
            failures += 1
            print(f"FAIL {schema:15} {path.relative_to(root)}: {e.message}")
    for path in sorted((root / "tests" / "golden" / "report").glob("*.jsonl")):
        for n, line in enumerate(path.read_text().splitlines(), start=1):
            try:
                jsonschema.validate(json.loads(line), schemas["session_event"])
            except jsonschema.ValidationError as e:
                failures += 1
                print(f"FAIL session_event {path.relative_to(root)}:{n}: {e.message}")
        print(f"ok   session_event   {path.relative_to(root)}")
    if not checks:
        print("no golden files found")
        return 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
