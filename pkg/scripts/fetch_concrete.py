"""Download the UCI Concrete Slump Test data and write it with package column names.

Usage::

    python3 scripts/fetch_concrete.py --out data/concrete.csv [--sha256 HEX]

The SHA-256 of the raw download is printed. Pass ``--sha256`` to refuse a file
whose digest differs from a previously recorded one.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import sys
import urllib.request

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from multiconf.data import CONCRETE_COVARIATES, CONCRETE_RESPONSES  # noqa: E402

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/concrete/slump/slump_test.data"
# upstream layout: No, 7 mixture components, slump, flow, 28-day strength
COLUMNS = CONCRETE_COVARIATES + CONCRETE_RESPONSES + ["compressive_strength"]


def convert(raw: bytes) -> list:
    reader = csv.reader(io.StringIO(raw.decode("utf-8")))
    next(reader)
    rows = []
    for row in reader:
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(COLUMNS) + 1:
            raise ValueError(f"expected {len(COLUMNS) + 1} fields, got {len(row)}: {row}")
        rows.append([c.strip() for c in row[1:]])
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="concrete.csv")
    ap.add_argument("--url", default=URL)
    ap.add_argument("--sha256", help="expected digest of the raw download")
    args = ap.parse_args(argv)
    with urllib.request.urlopen(args.url, timeout=60) as resp:
        raw = resp.read()
    digest = hashlib.sha256(raw).hexdigest()
    print(f"sha256 {digest}")
    if args.sha256 and args.sha256.lower() != digest:
        print(f"checksum mismatch: expected {args.sha256}", file=sys.stderr)
        return 2
    rows = convert(raw)
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(COLUMNS)
        wr.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
