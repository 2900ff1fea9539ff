#!/usr/bin/env python3
"""Regenerate lq_inverse/schema/session.schema.json from the SessionConfig model.

Usage:
    python scripts/export_schema.py           # write the schema
    python scripts/export_schema.py --check   # exit 1 if the shipped schema is stale
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from lq_inverse.session import session_schema
from lq_inverse.utils import SCHEMA_FILE, save_json


def main() -> int:
    parser = argparse.ArgumentParser(description="Export the session JSON schema")
    parser.add_argument("--check", action="store_true", help="Only compare with the shipped schema")
    args = parser.parse_args()

    schema = session_schema()
    if args.check:
        shipped = json.loads(SCHEMA_FILE.read_text(encoding="utf-8"))
        if shipped != schema:
            print(f"{SCHEMA_FILE} is out of date; run scripts/export_schema.py")
            return 1
        print(f"{SCHEMA_FILE} is up to date")
        return 0
    save_json(schema, SCHEMA_FILE)
    print(f"Schema written to {SCHEMA_FILE}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
