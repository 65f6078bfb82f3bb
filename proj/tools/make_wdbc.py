#!/usr/bin/env python3
"""Rebuild a WDBC-format file (id,diagnosis,30 reals) from scikit-learn's copy.

scikit-learn ships the diagnostic Wisconsin breast cancer data in the original
row and column order but without patient ids, so ids are synthesized as
sk0001..sk0569. Feature text is copied verbatim.
"""
import argparse
import os

import sklearn


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("output", help="destination path, e.g. data/wdbc.data")
    args = parser.parse_args()

    source = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
    with open(source) as f:
        header = f.readline().strip().split(",")
        n_samples, n_features = int(header[0]), int(header[1])
        rows = [line.strip().split(",") for line in f if line.strip()]

    assert len(rows) == n_samples and all(len(r) == n_features + 1 for r in rows)
    with open(args.output, "w") as out:
        for i, row in enumerate(rows, start=1):
            diagnosis = "M" if row[-1] == "0" else "B"
            out.write(",".join([f"sk{i:04d}", diagnosis] + row[:-1]) + "\n")


if __name__ == "__main__":
    main()
