#!/usr/bin/env python3
"""Download the UCI wheat seeds data and write it as seeds.csv.

The file lands in $NMFLAB_DATA_DIR (default ~/.cache/nmflab), where
``nmflab ... seeds`` and the acceptance tests look for it.
"""

import argparse
import sys
import urllib.request

from nmflab.dataset import data_dir

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/00236/seeds_dataset.txt"
COLUMNS = ["area", "perimeter", "compactness", "kernel_length", "kernel_width",
           "asymmetry", "groove_length"]
VARIETIES = {"1": "Kama", "2": "Rosa", "3": "Canadian"}


def parse(text):
    rows = []
    for line in text.splitlines():
        # A few rows use repeated tabs, so split on any whitespace.
        cells = line.split()
        if not cells:
            continue
        if len(cells) != 8:
            raise ValueError(f"unexpected row with {len(cells)} fields: {line!r}")
        rows.append(cells[:7] + [VARIETIES[cells[7]]])
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data-dir")
    ap.add_argument("--url", default=URL)
    args = ap.parse_args(argv)

    with urllib.request.urlopen(args.url, timeout=60) as resp:
        rows = parse(resp.read().decode("utf-8"))
    if len(rows) != 210:
        print(f"warning: expected 210 rows, got {len(rows)}", file=sys.stderr)
    out = data_dir(args.data_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "seeds.csv"
    with open(path, "w") as fh:
        fh.write(",".join(COLUMNS + ["variety"]) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    print(f"wrote {len(rows)} rows to {path}")


if __name__ == "__main__":
    main()
