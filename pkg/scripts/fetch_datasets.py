#!/usr/bin/env python3
"""Download the seven OpenML benchmark datasets as local CSV snapshots.

Requires network access to openml.org. Each dataset lands in data/<name>.csv
with the columns named by the original ARFF header; data/manifest.json
already carries the matching entries (label column, positive label,
categorical columns, OpenML task id), so after a successful fetch the
campaign commands pick the files up without further configuration.
"""

import csv
import json
import sys
import urllib.request
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

# name -> (OpenML dataset id, task id)
DATASETS = {
    "breast-w": (15, 15),
    "diabetes": (37, 37),
    "phoneme": (1489, 9952),
    "ilpd": (1480, 9971),
    "banknote-authentication": (1462, 10093),
    "blood-transfusion-service-center": (1464, 10101),
    "wilt": (40983, 146820),
}

API = "https://www.openml.org/api/v1/json/data/{}"


def fetch_json(url):
    with urllib.request.urlopen(url, timeout=60) as resp:
        return json.load(resp)


def parse_arff(text):
    columns, rows = [], []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        low = line.lower()
        if not in_data:
            if low.startswith("@attribute"):
                rest = line[len("@attribute"):].strip()
                if rest[0] in "'\"":
                    columns.append(rest[1 : rest.index(rest[0], 1)])
                else:
                    columns.append(rest.split()[0])
            elif low.startswith("@data"):
                in_data = True
            continue
        cells = [c.strip().strip("'\"") for c in next(csv.reader([line]))]
        rows.append(cells)
    return columns, rows


def main():
    DATA_DIR.mkdir(exist_ok=True)
    failures = []
    for name, (data_id, task_id) in DATASETS.items():
        target = DATA_DIR / f"{name}.csv"
        if target.exists():
            print(f"{name}: already present, skipping")
            continue
        try:
            meta = fetch_json(API.format(data_id))
            url = meta["data_set_description"]["url"]
            with urllib.request.urlopen(url, timeout=300) as resp:
                text = resp.read().decode("utf-8", errors="replace")
            columns, rows = parse_arff(text)
            with open(target, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(columns)
                w.writerows(rows)
            print(f"{name}: wrote {target} ({len(rows)} rows, task {task_id})")
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures.append(name)
            print(f"{name}: FAILED ({exc})", file=sys.stderr)
    if failures:
        print(f"failed: {', '.join(failures)}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
