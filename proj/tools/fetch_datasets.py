#!/usr/bin/env python3
"""Download the benchmark datasets and convert them to the canonical CSV form.

Each dataset listed in data/registry.json becomes a headered, comma-separated,
numeric CSV under data/. Missing values are written as empty cells; the loader
drops and counts those rows. Only the Python standard library is used.

Usage: python3 tools/fetch_datasets.py [--only name[,name...]] [--data-dir DIR]
"""

import argparse
import csv
import io
import json
import sys
import urllib.request
import zipfile
from pathlib import Path

UA = {"User-Agent": "hetcal-fetch/0.1"}


def fetch(url: str) -> bytes:
    print(f"  downloading {url}")
    req = urllib.request.Request(url, headers=UA)
    with urllib.request.urlopen(req, timeout=120) as resp:
        return resp.read()


def write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"  wrote {path} ({len(rows)} rows, {len(header) - 1} features + target)")


def convert_boston(out: Path):
    # CMU format: prose header, then each record wrapped over two lines.
    text = fetch("http://lib.stat.cmu.edu/datasets/boston").decode("latin-1")
    lines = text.splitlines()
    tokens = []
    for line in lines[22:]:  # data starts after the 22 documentation lines
        tokens.extend(line.split())
    if len(tokens) % 14 != 0:
        raise RuntimeError(f"boston: token count {len(tokens)} not divisible by 14")
    header = ["crim", "zn", "indus", "chas", "nox", "rm", "age", "dis", "rad", "tax",
              "ptratio", "b", "lstat", "medv"]
    rows = [tokens[i:i + 14] for i in range(0, len(tokens), 14)]
    write_csv(out, header, rows)


def convert_wine(out: Path, color: str):
    url = ("https://archive.ics.uci.edu/ml/machine-learning-databases/wine-quality/"
           f"winequality-{color}.csv")
    text = fetch(url).decode("utf-8")
    reader = csv.reader(io.StringIO(text), delimiter=";")
    table = [[cell.strip().strip('"') for cell in row] for row in reader if row]
    header = [h.replace(" ", "_") for h in table[0]]
    write_csv(out, header, table[1:])


def convert_parkinsons(out: Path):
    url = ("https://archive.ics.uci.edu/ml/machine-learning-databases/parkinsons/"
           "telemonitoring/parkinsons_updrs.data")
    text = fetch(url).decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    table = [row for row in reader if row]
    header = [h.strip() for h in table[0]]
    drop = {header.index("subject#"), header.index("motor_UPDRS")}
    keep = [i for i in range(len(header)) if i not in drop]
    new_header = [header[i] for i in keep]
    rows = [[row[i].strip() for i in keep] for row in table[1:]]
    write_csv(out, new_header, rows)


def convert_autompg(out: Path):
    url = "https://archive.ics.uci.edu/ml/machine-learning-databases/auto-mpg/auto-mpg.data"
    text = fetch(url).decode("latin-1")
    header = ["cylinders", "displacement", "horsepower", "weight", "acceleration",
              "model_year", "origin", "mpg"]
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        numeric = line.split('"')[0].split()  # car name is quoted at the end
        if len(numeric) != 8:
            raise RuntimeError(f"autompg: unexpected field count in line: {line!r}")
        mpg, rest = numeric[0], numeric[1:]
        rest = ["" if v == "?" else v for v in rest]
        rows.append(rest + [mpg])
    write_csv(out, header, rows)


def convert_crime(out: Path):
    base = "https://archive.ics.uci.edu/ml/machine-learning-databases/communities/"
    data = fetch(base + "communities.data").decode("utf-8")
    names = fetch(base + "communities.names").decode("latin-1")
    attr_names = []
    for line in names.splitlines():
        if line.startswith("@attribute"):
            attr_names.append(line.split()[1])
    reader = csv.reader(io.StringIO(data))
    table = [[c.strip() for c in row] for row in reader if row]
    n_cols = len(table[0])
    if len(attr_names) != n_cols:
        attr_names = [f"f{i}" for i in range(n_cols - 1)] + ["ViolentCrimesPerPop"]
    # first 5 columns are non-predictive identifiers
    candidates = list(range(5, n_cols))
    keep = []
    for i in candidates:
        missing = sum(1 for row in table if row[i] == "?")
        if i == n_cols - 1 or missing <= len(table) / 2:
            keep.append(i)
    header = [attr_names[i] for i in keep]
    header[-1] = "ViolentCrimesPerPop"
    rows = [["" if row[i] == "?" else row[i] for i in keep] for row in table]
    write_csv(out, header, rows)


def convert_superconductivity(out: Path):
    blob = fetch("https://archive.ics.uci.edu/ml/machine-learning-databases/00464/"
                 "superconduct.zip")
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        with zf.open("train.csv") as fh:
            text = fh.read().decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    table = [row for row in reader if row]
    write_csv(out, [h.strip() for h in table[0]], table[1:])


def convert_energy(out: Path):
    text = fetch("https://archive.ics.uci.edu/ml/machine-learning-databases/00374/"
                 "energydata_complete.csv").decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    table = [[cell.strip().strip('"') for cell in row] for row in reader if row]
    header = table[0]
    date_col = header.index("date")
    target_col = header.index("Appliances")
    keep = [i for i in range(len(header)) if i not in (date_col, target_col)] + [target_col]
    write_csv(out, [header[i] for i in keep], [[row[i] for i in keep] for row in table[1:]])


CONVERTERS = {
    "boston": convert_boston,
    "red_wine": lambda out: convert_wine(out, "red"),
    "white_wine": lambda out: convert_wine(out, "white"),
    "parkinsons": convert_parkinsons,
    "autompg": convert_autompg,
    "crime": convert_crime,
    "superconductivity": convert_superconductivity,
    "energy_appliance": convert_energy,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", default="", help="comma-separated dataset names")
    ap.add_argument("--data-dir", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()

    data_dir = Path(args.data_dir)
    registry = json.loads((data_dir / "registry.json").read_text())
    wanted = set(args.only.split(",")) if args.only else None

    failures = []
    for entry in registry["datasets"]:
        name = entry["name"]
        if wanted and name not in wanted:
            continue
        out = data_dir / entry["file"]
        if out.exists():
            print(f"{name}: {out} already present, skipping")
            continue
        print(f"{name}:")
        try:
            CONVERTERS[name](out)
        except Exception as exc:  # keep fetching the rest
            failures.append((name, str(exc)))
            print(f"  FAILED: {exc}", file=sys.stderr)

    if failures:
        print("\nFailed datasets:", ", ".join(n for n, _ in failures), file=sys.stderr)
        sys.exit(1)
    print("\nAll requested datasets are in place. Verify with: hetcal datasets")


if __name__ == "__main__":
    main()
